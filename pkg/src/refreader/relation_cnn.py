"""Residual CNN relation scorer for entity pairs under distant supervision.

Sentences are padded to ``L`` tokens; each token embeds as its word vector
plus two relative-position vectors (distance to each entity mention, clamped
to ``[-D_max, D_max]``). A first convolution of width ``h`` shrinks the
length to ``L - h + 1``; residual blocks of two same-padded convolutions
follow, then max pooling, two ReLU layers and a sigmoid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import ops
from .data import Vocab
from .optim import Adam, zero_grads
from .tensor import NumericError, Tensor, backward, no_grad

log = logging.getLogger(__name__)


class NoEvidence(ValueError):
    """A pair has no sentences, which is different from probability zero."""


@dataclass(frozen=True)
class CnnConfig:
    L: int = 100
    D_max: int = 30
    K: int = 4
    h: int = 2
    d_w: int = 50
    d_p: int = 5
    d_c: int = 50
    dropout_p: float = 0.2
    l2: float = 1e-4
    lr: float = 5e-5

    def __post_init__(self):
        for name in ("L", "D_max", "K", "h", "d_w", "d_p", "d_c"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.L < self.h:
            raise ValueError(f"pad length L={self.L} is shorter than the window h={self.h}")

    @property
    def num_blocks(self) -> int:
        # K counts convolution layers after the first; two per block
        return math.ceil(self.K / 2)

    @property
    def token_dim(self) -> int:
        return self.d_w + 2 * self.d_p


@dataclass
class SentenceInstance:
    tokens: list[str]
    p1: int
    p2: int
    pair: tuple[str, str]
    label: bool | None = None
    chart: int | None = None

    def __post_init__(self):
        if self.p1 == self.p2:
            raise ValueError("the two entity mentions must start at different tokens")
        for p in (self.p1, self.p2):
            if not 0 <= p < len(self.tokens):
                raise ValueError(f"mention position {p} outside the sentence")

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def to_json(self) -> dict:
        return {"tokens": self.tokens, "p1": self.p1, "p2": self.p2, "pair": list(self.pair),
                "label": self.label, "chart": self.chart}

    @classmethod
    def from_json(cls, doc: dict) -> "SentenceInstance":
        return cls(list(doc["tokens"]), int(doc["p1"]), int(doc["p2"]), tuple(doc["pair"]),
                   doc.get("label"), doc.get("chart"))


def window(inst: SentenceInstance, L: int) -> tuple[list[str], int, int]:
    """Tokens cut to at most ``L`` around the mentions' midpoint, with shifted positions."""
    n = len(inst.tokens)
    if n <= L:
        return inst.tokens, inst.p1, inst.p2
    mid = (inst.p1 + inst.p2) // 2
    start = min(max(0, mid - L // 2), n - L)
    clamp = lambda p: min(max(p - start, 0), L - 1)  # noqa: E731
    return inst.tokens[start:start + L], clamp(inst.p1), clamp(inst.p2)


def distance_index(entity_pos: int, length: int, d_max: int) -> np.ndarray:
    """Row ids into a (2*D_max+1)-row table for distances k - i, i = 0..length-1."""
    dist = entity_pos - np.arange(length)
    return np.clip(dist, -d_max, d_max) + d_max


@dataclass
class Batch:
    ids: np.ndarray
    pos1: np.ndarray
    pos2: np.ndarray
    labels: np.ndarray | None = None


def make_batch(instances: Sequence[SentenceInstance], vocab: Vocab, cfg: CnnConfig) -> Batch:
    B = len(instances)
    ids = np.zeros((B, cfg.L), dtype=np.int64)
    pos1 = np.zeros((B, cfg.L), dtype=np.int64)
    pos2 = np.zeros((B, cfg.L), dtype=np.int64)
    for b, inst in enumerate(instances):
        toks, p1, p2 = window(inst, cfg.L)
        ids[b, : len(toks)] = vocab.ids(toks)
        pos1[b] = distance_index(p1, cfg.L, cfg.D_max)
        pos2[b] = distance_index(p2, cfg.L, cfg.D_max)
    labels = None
    if all(inst.label is not None for inst in instances):
        labels = np.array([bool(inst.label) for inst in instances], dtype=np.float64)
    return Batch(ids, pos1, pos2, labels)


def load_embedding_file(path, vocab: Vocab, dim: int, table: np.ndarray) -> int:
    """Overwrite rows of ``table`` from ``token v1 ... v_dim`` lines; returns rows filled."""
    filled = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            if parts[0] in vocab:
                table[vocab.id(parts[0])] = np.asarray(parts[1:], dtype=np.float64)
                filled += 1
    return filled


def init_params(cfg: CnnConfig, vocab_size: int, rng: np.random.Generator) -> dict[str, Tensor]:
    def p(arr):
        return Tensor(arr, requires_grad=True)

    n_pos = 2 * cfg.D_max + 1
    win_in = cfg.h * cfg.token_dim
    win_c = cfg.h * cfg.d_c
    params = {
        "W": p(rng.normal(0.0, 0.1, (vocab_size, cfg.d_w))),
        "P1": p(rng.normal(0.0, 0.1, (n_pos, cfg.d_p))),
        "P2": p(rng.normal(0.0, 0.1, (n_pos, cfg.d_p))),
        "conv0.w": p(rng.normal(0.0, math.sqrt(2.0 / win_in), (win_in, cfg.d_c))),
        "conv0.b": p(np.zeros(cfg.d_c)),
    }
    for k in range(1, cfg.num_blocks + 1):
        for part in ("hat", "tilde"):
            params[f"block{k}.{part}.w"] = p(rng.normal(0.0, math.sqrt(2.0 / win_c), (win_c, cfg.d_c)))
            params[f"block{k}.{part}.b"] = p(np.zeros(cfg.d_c))
    params["g1.w"] = p(rng.normal(0.0, math.sqrt(2.0 / cfg.d_c), (cfg.d_c, cfg.d_c)))
    params["g1.b"] = p(np.zeros(cfg.d_c))
    params["g2.w"] = p(rng.normal(0.0, math.sqrt(2.0 / cfg.d_c), (cfg.d_c, cfg.d_c)))
    params["g2.b"] = p(np.zeros(cfg.d_c))
    params["v_r"] = p(rng.normal(0.0, 1.0 / math.sqrt(cfg.d_c), cfg.d_c))
    return params


def token_embed(batch: Batch, params: Mapping[str, Tensor]) -> Tensor:
    """(B, L, d_w + 2 d_p) token vectors [W(t_i); P1(k1 - i); P2(k2 - i)]."""
    return ops.concat([ops.embedding_lookup(params["W"], batch.ids),
                       ops.embedding_lookup(params["P1"], batch.pos1),
                       ops.embedding_lookup(params["P2"], batch.pos2)], axis=-1)


def _windows(x: Tensor, h: int) -> Tensor:
    n = x.shape[-2] - h + 1
    if h == 1:
        return x
    return ops.concat([x[..., j:j + n, :] for j in range(h)], axis=-1)


def conv(x: Tensor, w: Tensor, b: Tensor, h: int, same: bool = False) -> Tensor:
    """ReLU(w · x_{i:i+h} + b) for every valid window; ``same`` pads to keep the length."""
    if same and h > 1:
        left = (h - 1) // 2
        x = ops.pad(x, left, h - 1 - left, axis=-2)
    return ops.relu(_windows(x, h) @ w + b)


def first_conv(x: Tensor, w: Tensor, b: Tensor, h: int) -> Tensor:
    if x.shape[-2] < h:
        raise ValueError(f"sequence of length {x.shape[-2]} is shorter than the window {h}")
    return conv(x, w, b, h)


def residual_block(prev1: Tensor, prev2: Tensor | None, params: Mapping[str, Tensor], k: int, h: int) -> Tensor:
    """Two same-padded convolutions fed by the sum of the last two block outputs."""
    if prev2 is not None and prev1.shape != prev2.shape:
        raise ops.DimensionError(f"residual inputs differ in shape: {prev1.shape} vs {prev2.shape}")
    inp = prev1 if prev2 is None else prev1 + prev2
    hat = conv(inp, params[f"block{k}.hat.w"], params[f"block{k}.hat.b"], h, same=True)
    return conv(hat, params[f"block{k}.tilde.w"], params[f"block{k}.tilde.b"], h, same=True)


def head_logits(features: Tensor, params: Mapping[str, Tensor], cfg: CnnConfig,
                training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> Tensor:
    """Max-pool over positions, dropout on the pooled vector, two ReLU layers, logit."""
    z = ops.max_over_axis(features, axis=-2)
    z = ops.dropout(z, cfg.dropout_p, dropout_key, training)
    z1 = ops.relu(z @ params["g1.w"] + params["g1.b"])
    z2 = ops.relu(z1 @ params["g2.w"] + params["g2.b"])
    return z2 @ params["v_r"]


def forward_logits(batch: Batch, params: Mapping[str, Tensor], cfg: CnnConfig,
                   training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> Tensor:
    x = token_embed(batch, params)
    c = first_conv(x, params["conv0.w"], params["conv0.b"], cfg.h)
    prev2, prev1 = None, c
    for k in range(1, cfg.num_blocks + 1):
        out = residual_block(prev1, prev2, params, k, cfg.h)
        prev2, prev1 = prev1, out
    return head_logits(prev1, params, cfg, training, dropout_key)


class RelationCNN:
    def __init__(self, cfg: CnnConfig, vocab: Vocab, seed: int = 0, embedding_file=None):
        self.cfg, self.vocab = cfg, vocab
        self.params = init_params(cfg, len(vocab), np.random.default_rng(seed))
        if embedding_file is not None:
            load_embedding_file(embedding_file, vocab, cfg.d_w, self.params["W"].data)

    def sentence_probabilities(self, instances: Sequence[SentenceInstance], batch_size: int = 256) -> np.ndarray:
        out = []
        with no_grad():
            for i in range(0, len(instances), batch_size):
                batch = make_batch(instances[i:i + batch_size], self.vocab, self.cfg)
                out.append(ops.sigmoid(forward_logits(batch, self.params, self.cfg)).data)
        return np.concatenate(out) if out else np.zeros(0)

    def pair_probability(self, sentences: Sequence[SentenceInstance]) -> tuple[float, int]:
        """Max sentence probability and the index of the sentence attaining it."""
        if not sentences:
            raise NoEvidence("no sentences mention this pair")
        probs = self.sentence_probabilities(sentences)
        best = int(np.argmax(probs))
        return float(probs[best]), best

    def score_pairs(self, sets: Mapping[tuple[str, str], Sequence[SentenceInstance]]) -> dict:
        """pair -> (probability, representative sentence text); pairs without sentences skipped."""
        flat, owners = [], []
        for pair, sents in sets.items():
            flat.extend(sents)
            owners.extend([pair] * len(sents))
        probs = self.sentence_probabilities(flat)
        result: dict = {}
        for p, pair, inst in zip(probs, owners, flat):
            if pair not in result or p > result[pair][0]:
                result[pair] = (float(p), inst.text)
        return result


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)


def sentence_loss(batch: Batch, params, cfg: CnnConfig, training: bool, key, reduction: str = "mean") -> Tensor:
    loss = ops.binary_nll(forward_logits(batch, params, cfg, training, key), batch.labels)
    if reduction == "mean":
        return loss * (1.0 / len(batch.labels))
    if reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return loss


def train_re(model: RelationCNN, instances: Sequence[SentenceInstance], epochs: int, seed: int,
             batch_size: int = 32, lr: float | None = None, reduction: str = "mean") -> TrainLog:
    """Minimize per-sentence negative log-likelihood with Adam and L2 on all parameters."""
    labeled = [inst for inst in instances if inst.label is not None]
    if not labeled:
        raise ValueError("no labeled sentences to train on")
    cfg = model.cfg
    opt = Adam(cfg.lr if lr is None else lr, weight_decay=cfg.l2)
    rng = np.random.default_rng(seed)
    history = TrainLog()
    step = 0
    for epoch in range(epochs):
        total = 0.0
        order = rng.permutation(len(labeled))
        for i in range(0, len(order), batch_size):
            batch = make_batch([labeled[int(j)] for j in order[i:i + batch_size]], model.vocab, cfg)
            zero_grads(model.params)
            loss = sentence_loss(batch, model.params, cfg, True, (seed, step), reduction)
            if not np.isfinite(loss.item()):
                raise NumericError(f"non-finite loss at step {step}")
            backward(loss)
            opt.step(model.params)
            total += loss.item() * (len(batch.labels) if reduction == "mean" else 1.0)
            step += 1
        history.epoch_losses.append(total / len(labeled))
        log.info("relation cnn epoch %d loss %.4f", epoch + 1, history.epoch_losses[-1])
    zero_grads(model.params)
    return history


def build_vocab(instances: Sequence[SentenceInstance]) -> Vocab:
    seen = set()
    for inst in instances:
        seen.update(inst.tokens)
    return Vocab([*sorted(seen)])


def read_instances(path) -> list[SentenceInstance]:
    import json

    from .data import DataFormatError

    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(SentenceInstance.from_json(json.loads(line)))
        except (KeyError, ValueError, TypeError) as exc:
            raise DataFormatError(path, lineno, None, str(exc)) from None
    return out


def write_instances(path, instances: Sequence[SentenceInstance]) -> None:
    import json

    Path(path).write_text("".join(json.dumps(i.to_json(), separators=(",", ":")) + "\n" for i in instances))
