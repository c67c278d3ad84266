"""Explicit-reference reader: candidates are scored from the summed contextual
embeddings of their mentions across all paragraphs.

The per-paragraph quantity every scorer consumes is a ``(C+1) x d`` block of
mention sums (row 0: query entity, rows 1..C: candidates), obtained as
``selector_k @ H_k`` where ``selector_k`` counts mention positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import ops
from .data import EmptyPassage, Question, Vocab
from .encoder import EncoderConfig, build_input, encode_ids, init_params, paragraph_offset
from .tensor import Tensor


class CandidateError(ValueError):
    pass


def mention_sum(h: Tensor, positions: Sequence[int]) -> Tensor:
    """Sum of the rows of ``h`` at ``positions`` (duplicates counted, empty -> zeros)."""
    n = h.shape[0]
    counts = np.zeros(n)
    for t in positions:
        if not 0 <= t < n:
            raise IndexError(f"mention position {t} outside [0, {n})")
        counts[t] += 1.0
    return ops.matmul(Tensor(counts[None, :]), h).reshape(h.shape[1])


@dataclass
class Prepared:
    """Token ids and mention selectors for one question, ready for encoding."""

    question: Question
    inputs: list[np.ndarray]
    selectors: list[np.ndarray]
    answer_index: int

    @property
    def num_paragraphs(self) -> int:
        return len(self.inputs)

    @property
    def num_candidates(self) -> int:
        return self.selectors[0].shape[0] - 1 if self.selectors else len(self.question.candidates)


def prepare(question: Question, vocab: Vocab) -> Prepared:
    q_ids = vocab.ids(question.question_tokens)
    offset = paragraph_offset(len(q_ids))
    entities = [question.query_entity, *question.candidates]
    inputs, selectors = [], []
    for k, para in enumerate(question.paragraphs):
        ids = build_input(q_ids, vocab.ids(para))
        sel = np.zeros((len(entities), len(ids)))
        for row, ent in enumerate(entities):
            for t in question.positions(k, ent):
                sel[row, offset + t] += 1.0
        inputs.append(ids)
        selectors.append(sel)
    return Prepared(question, inputs, selectors, question.candidates.index(question.answer))


@dataclass(frozen=True)
class HeadConfig:
    hidden_dim: int = 64


def init_head(model_dim: int, cfg: HeadConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    d_in = 2 * model_dim
    return {
        "head.f.w": Tensor(rng.normal(0.0, math.sqrt(2.0 / d_in), (d_in, cfg.hidden_dim)), requires_grad=True),
        "head.f.b": Tensor(np.zeros(cfg.hidden_dim), requires_grad=True),
        "head.theta": Tensor(rng.normal(0.0, 1.0 / math.sqrt(cfg.hidden_dim), cfg.hidden_dim), requires_grad=True),
    }


class Reader:
    """Encoder parameters plus scoring head, with the full and ablation scorers."""

    def __init__(self, enc_cfg: EncoderConfig, head_cfg: HeadConfig, vocab: Vocab, seed: int = 0):
        if enc_cfg.vocab_size != len(vocab):
            raise ValueError("encoder vocab_size does not match the vocabulary")
        self.enc_cfg, self.head_cfg, self.vocab = enc_cfg, head_cfg, vocab
        rng = np.random.default_rng(seed)
        self.encoder_params = init_params(enc_cfg, rng)
        self.head_params = init_head(enc_cfg.model_dim, head_cfg, rng)

    @property
    def params(self) -> dict[str, Tensor]:
        return {**self.encoder_params, **self.head_params}

    def snapshot(self) -> dict[str, Tensor]:
        """Frozen copy of the encoder parameters (no gradients flow into it)."""
        return {n: Tensor(p.data.copy()) for n, p in self.encoder_params.items()}

    def prepare(self, question: Question) -> Prepared:
        return prepare(question, self.vocab)

    # building blocks -------------------------------------------------------
    def encode(self, prep: Prepared, k: int, params: Mapping[str, Tensor] | None = None,
               training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> Tensor:
        params = self.encoder_params if params is None else params
        return encode_ids(prep.inputs[k], params, self.enc_cfg, training, (*dropout_key, k))

    def paragraph_sums(self, prep: Prepared, k: int, params: Mapping[str, Tensor] | None = None,
                       training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> Tensor:
        h = self.encode(prep, k, params, training, dropout_key)
        return ops.matmul(Tensor(prep.selectors[k]), h)

    def score_sums(self, sums: Tensor) -> Tensor:
        """Candidate scores θᵀ f([query-sum ; candidate-sum]) from a (C+1) x d block."""
        c = sums.shape[0] - 1
        query = ops.matmul(Tensor(np.ones((c, 1))), sums[0:1])
        feats = ops.concat([query, sums[1:]], axis=-1)
        hidden = ops.relu(feats @ self.head_params["head.f.w"] + self.head_params["head.f.b"])
        return hidden @ self.head_params["head.theta"]

    # full model --------------------------------------------------------------
    def scores(self, prep: Prepared) -> Tensor:
        if prep.num_paragraphs == 0:
            raise EmptyPassage(f"question {prep.question.id} has no paragraphs")
        total = self.paragraph_sums(prep, 0)
        for k in range(1, prep.num_paragraphs):
            total = total + self.paragraph_sums(prep, k)
        return self.score_sums(total)

    def score_candidate(self, prep: Prepared, candidate: str) -> float:
        if candidate not in prep.question.candidates:
            raise CandidateError(f"{candidate!r} is not a candidate of question {prep.question.id}")
        return float(self.scores(prep).data[prep.question.candidates.index(candidate)])

    def loss_full(self, prep: Prepared, k: int, frozen: Sequence[np.ndarray] | None = None,
                  frozen_params: Mapping[str, Tensor] | None = None, training: bool = False,
                  dropout_key: tuple[int, ...] = (0,)) -> Tensor:
        """Negative log-probability of the answer with paragraph ``k`` live and the rest frozen.

        ``frozen`` supplies precomputed mention-sum blocks for the other
        paragraphs; otherwise they are computed from ``frozen_params``
        (default: a snapshot of the current encoder) as constants.
        """
        if not 0 <= k < prep.num_paragraphs:
            raise IndexError(f"paragraph {k} out of range")
        if frozen is None:
            snap = self.snapshot() if frozen_params is None else frozen_params
            frozen = [self.paragraph_sums(prep, j, snap).data for j in range(prep.num_paragraphs)]
        live = self.paragraph_sums(prep, k, training=training, dropout_key=dropout_key)
        rest = np.zeros_like(live.data)
        for j, block in enumerate(frozen):
            if j != k:
                rest = rest + block
        return ops.cross_entropy(self.score_sums(live + Tensor(rest)), prep.answer_index)

    def loss_naive(self, prep: Prepared, training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> Tensor:
        """The same loss with every paragraph in one graph."""
        if prep.num_paragraphs == 0:
            raise EmptyPassage(f"question {prep.question.id} has no paragraphs")
        total = None
        for k in range(prep.num_paragraphs):
            s = self.paragraph_sums(prep, k, training=training, dropout_key=dropout_key)
            total = s if total is None else total + s
        return ops.cross_entropy(self.score_sums(total), prep.answer_index)

    def probabilities(self, prep: Prepared) -> np.ndarray:
        s = self.scores(prep).data
        e = np.exp(s - s.max())
        return e / e.sum()

    def predict(self, prep: Prepared) -> str:
        if not prep.question.candidates:
            raise CandidateError("no candidates")
        return prep.question.candidates[int(np.argmax(self.scores(prep).data))]

    # independent-paragraph ablation -------------------------------------------
    def independent_scores(self, prep: Prepared) -> np.ndarray:
        """K x C matrix of per-paragraph candidate scores."""
        return np.stack([self.score_sums(self.paragraph_sums(prep, k)).data
                         for k in range(prep.num_paragraphs)])

    def independent_paragraph_loss(self, prep: Prepared, k: int, training: bool = False,
                                   dropout_key: tuple[int, ...] = (0,)) -> Tensor:
        sums = self.paragraph_sums(prep, k, training=training, dropout_key=dropout_key)
        return ops.cross_entropy(self.score_sums(sums), prep.answer_index)

    def independent_loss(self, prep: Prepared) -> Tensor:
        if prep.num_paragraphs == 0:
            raise EmptyPassage(f"question {prep.question.id} has no paragraphs")
        total = self.independent_paragraph_loss(prep, 0)
        for k in range(1, prep.num_paragraphs):
            total = total + self.independent_paragraph_loss(prep, k)
        return total

    def independent_predict(self, prep: Prepared) -> str:
        if not prep.question.candidates:
            raise CandidateError("no candidates")
        best = self.independent_scores(prep).max(axis=0)
        return prep.question.candidates[int(np.argmax(best))]


def oracle_filter(question: Question) -> Question:
    """Keep only the paragraphs that mention the answer, renumbering mentions."""
    keep = sorted({k for k, _ in question.mentions.get(question.answer, ())})
    if not keep:
        raise EmptyPassage(f"question {question.id}: answer is mentioned nowhere")
    remap = {old: new for new, old in enumerate(keep)}
    mentions = {}
    for ent, spots in question.mentions.items():
        kept = [(remap[k], t) for k, t in spots if k in remap]
        if kept:
            mentions[ent] = kept
    return replace(question, paragraphs=[question.paragraphs[k] for k in keep], mentions=mentions)
