"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, backward


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. every entry of ``t`` (mutated and restored)."""
    grad = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn().item()
        flat[i] = orig - h
        down = fn().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max |a-b| / max(max|a|, max|b|, floor), a scale-aware relative error."""
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), floor)
    return float(np.abs(a - b).max(initial=0.0) / denom)


def check(fn: Callable[[], Tensor], params: Mapping[str, Tensor], h: float = 1e-5) -> dict[str, float]:
    """Relative error between analytic and numeric gradients, per parameter."""
    for p in params.values():
        p.grad = None
    backward(fn())
    errors = {}
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        errors[name] = rel_error(analytic, numeric_grad(fn, p, h))
    return errors


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.uniform(margin, 1.5, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _op_cases(rng) -> list[tuple[str, Callable[[], Tensor], dict[str, Tensor]]]:
    from . import ops

    def leaf(arr):
        return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)

    a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(3, 4)))
    row = leaf(rng.normal(size=(4,)))
    pos = leaf(rng.uniform(0.5, 2.0, size=(3, 4)))
    m1, m2 = leaf(rng.normal(size=(2, 3, 4))), leaf(rng.normal(size=(2, 4, 5)))
    vec = leaf(rng.normal(size=(4,)))
    kink = leaf(_away_from_zero(rng, (3, 4)))
    distinct = leaf(rng.permutation(12).reshape(3, 4) * 0.3 + rng.uniform(0, 0.01, (3, 4)))
    table = leaf(rng.normal(size=(6, 3)))
    ids = np.array([[0, 2, 2], [5, 1, 0]])
    gamma, beta = leaf(rng.normal(size=(4,))), leaf(rng.normal(size=(4,)))
    wts = rng.normal(size=(3, 4))
    labels = (rng.random(4) < 0.5).astype(float)

    def weighted(t):
        return ops.sum(ops.mul(t, Tensor(wts[: t.shape[0], : t.shape[1]]))) if t.ndim == 2 else ops.sum(t)

    return [
        ("add", lambda: weighted(a + row), {"a": a, "row": row}),
        ("sub", lambda: weighted(a - b), {"a": a, "b": b}),
        ("mul", lambda: weighted(a * b), {"a": a, "b": b}),
        ("div", lambda: weighted(a / pos), {"a": a, "pos": pos}),
        ("neg", lambda: weighted(-a), {"a": a}),
        ("matmul", lambda: ops.sum(ops.tanh(m1 @ m2)), {"m1": m1, "m2": m2}),
        ("matmul_vec", lambda: ops.sum(ops.tanh(a @ vec)), {"a": a, "vec": vec}),
        ("reshape", lambda: ops.sum(ops.tanh(ops.reshape(a, (4, 3))) * Tensor(wts.reshape(4, 3))), {"a": a}),
        ("transpose", lambda: ops.sum(ops.transpose(a) * Tensor(wts.T)), {"a": a}),
        ("swapaxes", lambda: ops.sum(ops.tanh(ops.swapaxes(m1, 1, 2))), {"m1": m1}),
        ("getitem", lambda: ops.sum(ops.tanh(a[np.array([0, 2, 2]), 1:3])), {"a": a}),
        ("concat", lambda: ops.sum(ops.tanh(ops.concat([a, b], axis=0))), {"a": a, "b": b}),
        ("pad", lambda: ops.sum(ops.tanh(ops.pad(a, 1, 2, axis=1) + 0.3)), {"a": a}),
        ("embedding_lookup", lambda: ops.sum(ops.tanh(ops.embedding_lookup(table, ids))), {"table": table}),
        ("sum", lambda: ops.sum(ops.tanh(ops.sum(a, axis=0))), {"a": a}),
        ("mean", lambda: ops.sum(ops.tanh(ops.mean(a, axis=1, keepdims=True))), {"a": a}),
        ("max_over_axis", lambda: weighted(ops.reshape(ops.max_over_axis(distinct, axis=0), (1, 4))),
         {"distinct": distinct}),
        ("relu", lambda: weighted(ops.relu(kink)), {"kink": kink}),
        ("sigmoid", lambda: weighted(ops.sigmoid(a)), {"a": a}),
        ("log_sigmoid", lambda: weighted(ops.log_sigmoid(a)), {"a": a}),
        ("exp", lambda: weighted(ops.exp(a)), {"a": a}),
        ("log", lambda: weighted(ops.log(pos)), {"pos": pos}),
        ("tanh", lambda: weighted(ops.tanh(a)), {"a": a}),
        ("softmax", lambda: weighted(ops.softmax(a, axis=-1)), {"a": a}),
        ("log_softmax", lambda: weighted(ops.log_softmax(a, axis=0)), {"a": a}),
        ("layer_norm", lambda: weighted(ops.layer_norm(a, gamma, beta)), {"a": a, "gamma": gamma, "beta": beta}),
        ("dropout", lambda: weighted(ops.dropout(a, 0.3, (7,), training=True)), {"a": a}),
        ("cross_entropy", lambda: ops.cross_entropy(row, 2), {"row": row}),
        ("binary_nll", lambda: ops.binary_nll(vec, labels), {"vec": vec}),
    ]


def _reader_case(rng):
    from .data import Question, Vocab
    from .encoder import EncoderConfig
    from .reader import HeadConfig, Reader

    paragraphs = [["w1", "@ent1", "w2", "@ent0", "w1"], ["@ent2", "w3", "@ent1", "w2"]]
    mentions = {"@ent0": [(0, 3)], "@ent1": [(0, 1), (1, 2)], "@ent2": [(1, 0)]}
    q = Question("gc", "founded", "@ent0", paragraphs, ["@ent1", "@ent2"], "@ent2", mentions)
    vocab = Vocab.build([q])
    cfg = EncoderConfig(len(vocab), num_layers=1, model_dim=8, num_heads=2, ffn_dim=12, max_positions=16,
                        dropout_p=0.0)
    reader = Reader(cfg, HeadConfig(6), vocab, seed=int(rng.integers(1 << 31)))
    prep = reader.prepare(q)
    return "reader_model", lambda: reader.loss_naive(prep), reader.params


def _cnn_case(rng):
    from .relation_cnn import CnnConfig, RelationCNN, SentenceInstance, build_vocab, make_batch, sentence_loss

    cfg = CnnConfig(L=8, D_max=5, K=2, h=2, d_w=4, d_p=2, d_c=4, dropout_p=0.0)
    sents = [
        SentenceInstance("the grain_a improves toughness here .".split(), 1, 3, ("grain_a", "toughness"), True),
        SentenceInstance("rolling and grain_a were seen".split(), 0, 2, ("rolling", "grain_a"), False),
    ]
    model = RelationCNN(cfg, build_vocab(sents), seed=int(rng.integers(1 << 31)))
    batch = make_batch(sents, model.vocab, cfg)
    return "cnn_model", lambda: sentence_loss(batch, model.params, cfg, False, (0,)), model.params


def suite(seed: int = 0) -> list[tuple[str, Callable[[], Tensor], dict[str, Tensor]]]:
    """Every differentiable op plus the reader and relation CNN at tiny sizes."""
    rng = np.random.default_rng(seed)
    return [*_op_cases(rng), _reader_case(rng), _cnn_case(rng)]


def run_suite(seed: int = 0) -> dict[str, float]:
    """Worst relative error per case."""
    return {name: max(check(fn, params).values()) for name, fn, params in suite(seed)}
