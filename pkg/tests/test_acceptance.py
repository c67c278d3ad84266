"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict; the lines are printed together
at the end of the module. Run with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import time

import numpy as np
import pytest

from refreader import pipeline
from refreader.chart import PsppGraph, build_chart, process_capacity, structure_capacity
from refreader.config import load
from refreader.data import Question, Vocab
from refreader.encoder import EncoderConfig
from refreader.gradcheck import rel_error, run_suite
from refreader.metrics import pr_curve
from refreader.reader import HeadConfig, Reader
from refreader.trainer import naive_gradients, two_pass_gradients

VERDICTS: dict[int, str] = {}


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    lines = ["", "acceptance summary"] + [VERDICTS[k] for k in sorted(VERDICTS)]
    for line in lines:
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)


def verdict(n: int, name: str, ok: bool, detail: str) -> None:
    VERDICTS[n] = f"[{'PASS' if ok else 'FAIL'}] {n}. {name}: {detail}"


def random_question(rng, k, length, candidates=4, qid="a"):
    ents = [f"@ent{i}" for i in range(candidates + 1)]
    words = [f"w{i}" for i in range(30)]
    paragraphs, mentions = [], {}
    for j in range(k):
        para = [words[int(i)] for i in rng.integers(len(words), size=length)]
        for e in ents:
            for t in rng.choice(length, int(rng.integers(0, 3)), replace=False):
                para[int(t)] = e
        for t, tok in enumerate(para):
            if tok in ents:
                mentions.setdefault(tok, []).append((j, t))
        paragraphs.append(para)
    return Question(qid, "founded owns", ents[0], paragraphs, ents[1:], ents[1 + int(rng.integers(candidates))],
                    mentions)


def test_1_gradient_equivalence():
    rng = np.random.default_rng(0)
    questions = [random_question(rng, int(rng.integers(2, 9)), int(rng.integers(6, 16)), qid=f"g{i}")
                 for i in range(20)]
    vocab = Vocab.build(questions)
    cfg = EncoderConfig(len(vocab), num_layers=2, model_dim=32, num_heads=4, ffn_dim=64, max_positions=32,
                        dropout_p=0.0)
    start = time.perf_counter()
    worst = 0.0
    for i, q in enumerate(questions):
        reader = Reader(cfg, HeadConfig(32), vocab, seed=i)
        prep = reader.prepare(q)
        two, _ = two_pass_gradients(reader, prep)
        naive, _, _ = naive_gradients(reader, prep)
        assert set(two) == set(naive)
        worst = max(worst, *(rel_error(two[n], naive[n]) for n in naive))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 60
    verdict(1, "gradient equivalence", ok, f"max rel err {worst:.2e} (<= 1e-8), {elapsed:.1f}s (< 60s)")
    assert ok


def test_2_memory_constancy(tmp_path):
    cfg = load(None, [f"workdir={tmp_path}"])
    start = time.perf_counter()
    rows = {r["paragraphs"]: r for r in pipeline.run_memprofile(cfg, [1, 2, 4, 8])}
    elapsed = time.perf_counter() - start
    two = rows[8]["two_pass_peak"] / rows[1]["two_pass_peak"]
    naive = rows[8]["naive_peak"] / rows[1]["naive_peak"]
    ok = two <= 1.1 and naive >= 6 and elapsed < 60
    verdict(2, "memory constancy", ok,
            f"two-pass peak(8)/peak(1) {two:.4f} (<= 1.1), naive {naive:.2f} (>= 6), {elapsed:.1f}s")
    assert ok


def test_3_finite_difference_suite():
    start = time.perf_counter()
    errors = run_suite(seed=0)
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    ok = errors[worst] < 1e-4 and elapsed < 120 and {"reader_model", "cnn_model"} <= set(errors)
    verdict(3, "finite-difference suite", ok,
            f"{len(errors)} cases, worst {worst} {errors[worst]:.2e} (< 1e-4), {elapsed:.1f}s")
    assert ok


def test_4_ablation_ordering(tmp_path):
    cfg = load(None, [f"workdir={tmp_path}"])
    start = time.perf_counter()
    train, dev = pipeline.run_gen_wikihop(cfg)
    assert (len(train), len(dev)) == (1600, 400)
    for kind in ("full", "independent", "oracle"):
        pipeline.run_train_reader(cfg, kind)
    acc = pipeline.run_eval_reader(cfg)
    elapsed = time.perf_counter() - start
    ok = (acc["oracle"] >= acc["full"] >= acc["independent"] and acc["full"] - acc["independent"] >= 0.05
          and acc["full"] >= 0.9 and elapsed < 600)
    verdict(4, "ablation ordering", ok,
            f"oracle {acc['oracle']:.4f} >= full {acc['full']:.4f} >= independent {acc['independent']:.4f}, "
            f"gap {100 * (acc['full'] - acc['independent']):.1f} pts, {elapsed:.0f}s (< 600s)")
    assert ok


def _re_run(tmp_path, signal):
    cfg = load(None, [f"workdir={tmp_path}", f"re_world.signal_rate={signal}"])
    pipeline.run_gen_re_corpus(cfg)
    pipeline.run_weak_label(cfg)
    pipeline.run_train_re(cfg, include_all=False)
    return pipeline.run_eval_re(cfg)


def test_5_relation_cnn_separability(tmp_path):
    start = time.perf_counter()
    sep = _re_run(tmp_path / "signal1", 1.0)
    elapsed = time.perf_counter() - start
    null = _re_run(tmp_path / "signal0", 0.0)
    gap = abs(null["average_precision"] - null["positive_rate"])
    ok = sep["precision_at_recall_0.9"] >= 0.95 and elapsed < 300 and gap <= 0.1
    verdict(5, "relation CNN separability", ok,
            f"precision@recall>=0.9 {sep['precision_at_recall_0.9']:.3f} (>= 0.95) in {elapsed:.0f}s; "
            f"signal 0: AUC {null['average_precision']:.3f} vs positive rate {null['positive_rate']:.3f} "
            f"(|diff| {gap:.3f} <= 0.1)")
    assert ok


def test_6_pr_curve_oracle():
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(1, 40))
        scores = {(f"a{i}", f"b{i % 3}"): float(rng.integers(0, 6)) / 5 for i in range(n)}
        positives = {p for p in scores if rng.random() < 0.3} or {next(iter(scores))}
        points = pr_curve(scores, positives)
        order = sorted(scores, key=lambda p: (-scores[p], p))
        for t in range(1, n + 1):
            hits = sum(1 for p in order[:t] if p in positives)
            pt = points[t - 1]
            if (pt.t, pt.precision, pt.recall) != (t, hits / t, hits / len(positives)):
                mismatches += 1
    verdict(6, "PR-curve oracle", mismatches == 0, f"{mismatches} mismatches over 100 random sets (exact)")
    assert mismatches == 0


def test_7_chart_oracle():
    rng = np.random.default_rng(7)
    selection_errors, worst_cap = 0, 0.0
    for _ in range(50):
        cats = {"p0": "Process", "p1": "Process", "s0": "Structure", "s1": "Structure",
                "q0": "Property", "q1": "Property"}
        scores = {}
        for a, b in [("p0", "s0"), ("p0", "s1"), ("p1", "s0"), ("p1", "s1"),
                     ("s0", "q0"), ("s0", "q1"), ("s1", "q0"), ("s1", "q1")]:
            if rng.random() < 0.85:
                scores[(a, b)] = float(rng.integers(0, 5)) / 4 if rng.random() < 0.5 else float(rng.random())
        g = PsppGraph(cats, scores)
        props = ["q0", "q1"] if rng.random() < 0.5 else ["q0"]
        # rank every (structure, process) choice: structure capacity, then name ties, then edge score
        best = min(itertools.product(["s0", "s1"], ["p0", "p1"]),
                   key=lambda sp: (-structure_capacity(sp[0], ["p0", "p1"], props, g), sp[0],
                                   -g.score(sp[1], sp[0]), sp[1]))
        chart = build_chart(g, props, 1, 1)
        selection_errors += (chart.structures[0].name, chart.processes[0].name) != best
        for s in ("s0", "s1"):
            feed = sum(scores.get((p, s), 0.0) for p in ("p0", "p1"))
            direct = min(feed, sum(scores.get((s, q), 0.0) for q in props))
            worst_cap = max(worst_cap, abs(structure_capacity(s, ["p0", "p1"], props, g) - direct))
        for p in ("p0", "p1"):
            direct = sum(scores.get((p, s), 0.0) for s in ("s0", "s1"))
            worst_cap = max(worst_cap, abs(process_capacity(p, ["s0", "s1"], g) - direct))
    ok = selection_errors == 0 and worst_cap <= 1e-12
    verdict(7, "chart oracle", ok,
            f"{selection_errors} selection mismatches over 50 graphs, capacity err {worst_cap:.1e} (<= 1e-12)")
    assert ok


def _full_pipeline(workdir):
    overrides = [f"workdir={workdir}", "wikihop.count=60", "reader_train.epochs=1"]
    cfg = load(None, overrides)
    pipeline.run_gen_wikihop(cfg)
    for kind in ("full", "independent", "oracle"):
        pipeline.run_train_reader(cfg, kind)
    pipeline.run_eval_reader(cfg)
    pipeline.run_re_pipeline(cfg)


def test_8_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _full_pipeline(a)
    _full_pipeline(b)
    artifacts = sorted(p.name for p in a.iterdir() if p.suffix in (".json", ".csv", ".jsonl", ".dot", ".tsv"))
    differ = [name for name in artifacts if (a / name).read_bytes() != (b / name).read_bytes()]
    checked = {"reader_full.ckpt.json", "re_all.ckpt.json", "re_fold0.ckpt.json", "reader_eval.csv",
               "re_metrics.csv", "pr_curve.csv", "chart.json"}
    ok = not differ and checked <= set(artifacts)
    verdict(8, "determinism", ok, f"{len(artifacts)} artifacts compared byte for byte, {len(differ)} differ"
            + (f" ({', '.join(differ)})" if differ else ""))
    assert ok
