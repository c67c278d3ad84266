"""Post-LN Transformer encoder over ``question [SEP] paragraph`` sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import ops
from .tensor import Tensor

PAD_ID = 0
SEP_ID = 1


class ConfigError(ValueError):
    pass


class SequenceTooLong(ValueError):
    """Input would exceed the position table; nothing is truncated silently."""


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    num_layers: int = 2
    model_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    max_positions: int = 128
    dropout_p: float = 0.1

    def __post_init__(self):
        for field in ("vocab_size", "num_layers", "model_dim", "num_heads", "ffn_dim", "max_positions"):
            if getattr(self, field) <= 0:
                raise ConfigError(f"{field} must be positive")
        if self.model_dim % self.num_heads:
            raise ConfigError("model_dim must be divisible by num_heads")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must lie in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads


def init_params(cfg: EncoderConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    d, f = cfg.model_dim, cfg.ffn_dim

    def p(name, arr):
        return name, Tensor(arr, requires_grad=True, name=name)

    items = [
        p("enc.tok_emb", rng.normal(0.0, 1.0, (cfg.vocab_size, d))),
        p("enc.pos_emb", rng.normal(0.0, 1.0, (cfg.max_positions, d))),
    ]
    for layer in range(cfg.num_layers):
        pre = f"enc.layer{layer}."
        items += [
            p(pre + "qkv.w", rng.normal(0.0, 1.0 / math.sqrt(d), (d, 3 * d))),
            p(pre + "qkv.b", np.zeros(3 * d)),
            p(pre + "out.w", rng.normal(0.0, 1.0 / math.sqrt(d), (d, d))),
            p(pre + "out.b", np.zeros(d)),
            p(pre + "ln1.g", np.ones(d)),
            p(pre + "ln1.b", np.zeros(d)),
            p(pre + "ffn1.w", rng.normal(0.0, math.sqrt(2.0 / d), (d, f))),
            p(pre + "ffn1.b", np.zeros(f)),
            p(pre + "ffn2.w", rng.normal(0.0, 1.0 / math.sqrt(f), (f, d))),
            p(pre + "ffn2.b", np.zeros(d)),
            p(pre + "ln2.g", np.ones(d)),
            p(pre + "ln2.b", np.zeros(d)),
        ]
    return dict(items)


def attention(q, k, v) -> Tensor:
    """softmax(q kᵀ / sqrt(d_k)) v over the last two axes (leading axes batch)."""
    dk = q.shape[-1]
    if dk == 0:
        raise ConfigError("key dimension must be positive")
    if k.shape[-1] != dk or k.shape[-2] != v.shape[-2]:
        raise ops.DimensionError(f"attention shapes disagree: q{q.shape} k{k.shape} v{v.shape}")
    logits = ops.matmul(q, ops.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dk))
    return ops.matmul(ops.softmax(logits, axis=-1), v)


def build_input(question_ids: Sequence[int], paragraph_ids: Sequence[int]) -> np.ndarray:
    return np.asarray([*question_ids, SEP_ID, *paragraph_ids], dtype=np.int64)


def paragraph_offset(num_question_tokens: int) -> int:
    """Index in the encoder input of paragraph token 0."""
    return num_question_tokens + 1


def encode_ids(ids: np.ndarray, params: Mapping[str, Tensor], cfg: EncoderConfig,
               training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> Tensor:
    n = len(ids)
    if n > cfg.max_positions:
        raise SequenceTooLong(f"sequence of {n} tokens exceeds max_positions={cfg.max_positions}")
    if n and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise IndexError("token id outside the vocabulary")
    d, h, dk = cfg.model_dim, cfg.num_heads, cfg.head_dim
    p_drop = cfg.dropout_p if training else 0.0
    site = 0

    def drop(t):
        nonlocal site
        site += 1
        return ops.dropout(t, p_drop, (*dropout_key, site), training)

    x = ops.embedding_lookup(params["enc.tok_emb"], ids) + params["enc.pos_emb"][:n]
    x = drop(x)
    for layer in range(cfg.num_layers):
        pre = f"enc.layer{layer}."
        qkv = x @ params[pre + "qkv.w"] + params[pre + "qkv.b"]
        heads = ops.transpose(qkv.reshape(n, 3, h, dk), (1, 2, 0, 3))
        ctx = attention(heads[0], heads[1], heads[2])
        merged = ops.transpose(ctx, (1, 0, 2)).reshape(n, d)
        att = merged @ params[pre + "out.w"] + params[pre + "out.b"]
        x = ops.layer_norm(x + drop(att), params[pre + "ln1.g"], params[pre + "ln1.b"])
        hidden = ops.relu(x @ params[pre + "ffn1.w"] + params[pre + "ffn1.b"])
        ffn = hidden @ params[pre + "ffn2.w"] + params[pre + "ffn2.b"]
        x = ops.layer_norm(x + drop(ffn), params[pre + "ln2.g"], params[pre + "ln2.b"])
    return x


def encode(question_ids: Sequence[int], paragraph_ids: Sequence[int], params: Mapping[str, Tensor],
           cfg: EncoderConfig, training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> Tensor:
    """Contextual embeddings, one row per position of ``q [SEP] para``."""
    return encode_ids(build_input(question_ids, paragraph_ids), params, cfg, training, dropout_key)
