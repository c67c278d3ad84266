"""Command implementations shared by the CLI and the tests.

Each step reads and writes plain files under ``cfg.workdir`` so that steps can
run as separate processes and two runs with one config are byte-comparable.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import checkpoint, plotting
from .chart import PsppGraph, build_chart
from .config import RunConfig
from .data import Question, Vocab, read_questions, write_questions
from .encoder import EncoderConfig
from .metrics import average_precision, pr_csv, pr_curve, precision_at_recall
from .optim import Adam, WarmupSchedule
from .reader import HeadConfig, Reader, oracle_filter
from .relation_cnn import CnnConfig, RelationCNN, build_vocab, read_instances, train_re, write_instances
from .synthetic import ReWorld, SyntheticKb, gen_re_corpus, gen_re_world, gen_wikihop
from .trainer import MODEL_KINDS, TrainMode, evaluate_reader, fit_reader, naive_train_question, train_question
from .weak_supervision import (
    EntityLexicon, TrainingChart, build_sentence_sets, missing_pairs, read_corpus, weak_label, write_corpus,
)

log = logging.getLogger(__name__)


def workdir(cfg: RunConfig) -> Path:
    path = Path(cfg.workdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# reader ----------------------------------------------------------------------

def run_gen_wikihop(cfg: RunConfig) -> tuple[list[Question], list[Question]]:
    w = cfg.wikihop
    questions = gen_wikihop(SyntheticKb.default(), w.count, w.hops, cfg.seed, w.anonymize, w.pool,
                            num_distractor_paragraphs=w.distractor_paragraphs, num_distractors=w.distractors)
    cut = int(round(w.train_fraction * len(questions)))
    train, dev = questions[:cut], questions[cut:]
    out = workdir(cfg)
    write_questions(out / "wikihop_train.jsonl", train)
    write_questions(out / "wikihop_dev.jsonl", dev)
    log.info("wrote %d train / %d dev questions", len(train), len(dev))
    return train, dev


def _encoder_config(cfg: RunConfig, vocab_size: int) -> EncoderConfig:
    e = cfg.encoder
    return EncoderConfig(vocab_size, e.num_layers, e.model_dim, e.num_heads, e.ffn_dim, e.max_positions, e.dropout_p)


def reader_vocab(cfg: RunConfig, questions) -> Vocab:
    return Vocab.build(questions, [f"@ent{i}" for i in range(cfg.wikihop.pool)])


def _optimizer_steps(questions, kind: str, mode: str, epochs: int) -> int:
    if kind == "independent" or mode == TrainMode.ACCUMULATE.value:
        return epochs * len(questions)
    per = (len(oracle_filter(q).paragraphs) if kind == "oracle" else len(q.paragraphs) for q in questions)
    return epochs * sum(per)


def run_train_reader(cfg: RunConfig, kind: str) -> dict:
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown reader kind {kind!r}")
    out = workdir(cfg)
    train = read_questions(out / "wikihop_train.jsonl")
    dev = read_questions(out / "wikihop_dev.jsonl")
    vocab = reader_vocab(cfg, train + dev)
    reader = Reader(_encoder_config(cfg, len(vocab)), HeadConfig(cfg.head.hidden_dim), vocab, seed=cfg.seed)
    t = cfg.reader_train
    steps = _optimizer_steps(train, kind, t.mode, t.epochs)
    opt = Adam(t.lr, weight_decay=t.weight_decay, schedule=WarmupSchedule(t.lr, t.warmup_fraction, max(steps, 1)))
    result = fit_reader(reader, train, kind, opt, t.epochs, cfg.seed, TrainMode(t.mode),
                        reanonymize_pool=cfg.wikihop.pool if t.reanonymize and cfg.wikihop.anonymize else None)
    checkpoint.save(out / f"reader_{kind}.ckpt.json", reader.params)
    _write_json(out / "reader_vocab.json", vocab.to_json())
    lines = ["epoch,loss"] + [f"{i + 1},{v!r}" for i, v in enumerate(result.epoch_losses)]
    (out / f"reader_{kind}_train.csv").write_text("\n".join(lines) + "\n")
    plotting.plot_losses({kind: result.epoch_losses}, out / f"reader_{kind}_loss.png")
    return {"kind": kind, "epoch_losses": result.epoch_losses}


def load_reader(cfg: RunConfig, kind: str) -> Reader:
    out = workdir(cfg)
    vocab = Vocab(json.loads((out / "reader_vocab.json").read_text()))
    reader = Reader(_encoder_config(cfg, len(vocab)), HeadConfig(cfg.head.hidden_dim), vocab, seed=cfg.seed)
    checkpoint.load_into(out / f"reader_{kind}.ckpt.json", reader.params)
    return reader


def run_eval_reader(cfg: RunConfig, kinds=MODEL_KINDS) -> dict[str, float]:
    out = workdir(cfg)
    dev = read_questions(out / "wikihop_dev.jsonl")
    acc = {}
    for kind in kinds:
        acc[kind], _ = evaluate_reader(load_reader(cfg, kind), dev, kind)
        log.info("%s dev accuracy %.4f", kind, acc[kind])
    lines = ["model,accuracy"] + [f"{k},{v!r}" for k, v in acc.items()]
    (out / "reader_eval.csv").write_text("\n".join(lines) + "\n")
    plotting.plot_accuracies(acc, out / "reader_eval.png")
    return acc


def memprofile_question(num_paragraphs: int, length: int, candidates: int, rng: np.random.Generator) -> Question:
    """Random passage with equal-length paragraphs, each mentioning every entity once."""
    ents = [f"@ent{i}" for i in range(candidates + 1)]
    words = [f"w{i}" for i in range(20)]
    paragraphs, mentions = [], {}
    for k in range(num_paragraphs):
        para = [words[int(i)] for i in rng.integers(len(words), size=length)]
        spots = rng.choice(length, len(ents), replace=False)
        for e, t in zip(ents, spots):
            para[int(t)] = e
            mentions.setdefault(e, []).append((k, int(t)))
        paragraphs.append(para)
    return Question(f"mem{num_paragraphs}", "founded", ents[0], paragraphs, ents[1:], ents[1], mentions)


def run_memprofile(cfg: RunConfig, paragraph_counts=None, length: int | None = None) -> list[dict]:
    m = cfg.memprofile
    counts = list(paragraph_counts or m.paragraphs)
    length = length or m.paragraph_length
    rng = np.random.default_rng(cfg.seed)
    questions = {k: memprofile_question(k, length, m.candidates, rng) for k in counts}
    vocab = Vocab.build(questions.values())
    enc = _encoder_config(cfg, len(vocab))
    rows = []
    for k in counts:
        reader = Reader(enc, HeadConfig(cfg.head.hidden_dim), vocab, seed=cfg.seed)
        prep = reader.prepare(questions[k])
        report = train_question(reader, prep, Adam(1e-3), TrainMode.ACCUMULATE)
        reader = Reader(enc, HeadConfig(cfg.head.hidden_dim), vocab, seed=cfg.seed)
        _, naive = naive_train_question(reader, reader.prepare(questions[k]), Adam(1e-3))
        rows.append({"paragraphs": k, "two_pass_peak": report.peak_retained_scalars,
                     "naive_peak": naive.peak_retained_scalars, "pass1_peak": report.pass1_peak,
                     "pinned": report.pinned_scalars, "parameters": report.parameter_scalars})
    out = workdir(cfg)
    _write_json(out / "memprofile.json", rows)
    header = ["paragraphs", "two_pass_peak", "naive_peak", "pass1_peak", "pinned", "parameters"]
    lines = ["\t".join(header)] + ["\t".join(str(r[h]) for h in header) for r in rows]
    (out / "memprofile.tsv").write_text("\n".join(lines) + "\n")
    plotting.plot_memprofile([(r["paragraphs"], r["two_pass_peak"], r["naive_peak"]) for r in rows],
                             out / "memprofile.png")
    return rows


# relation extraction -----------------------------------------------------------

def _chart_paths(out: Path) -> list[Path]:
    return sorted(out.glob("chart*.tsv"), key=lambda p: int(p.stem[len("chart"):]))


def run_gen_re_corpus(cfg: RunConfig) -> ReWorld:
    w = cfg.re_world
    world = gen_re_world(cfg.seed, w.charts, w.processes, w.structures, w.properties_per_chart, w.positive_rate)
    corpus = gen_re_corpus(world, w.sentences_per_pair, w.signal_rate, cfg.seed + 1, w.unrelated)
    out = workdir(cfg)
    lexicon = EntityLexicon(world.lexicon)
    (out / "lexicon.tsv").write_text(lexicon.to_tsv())
    for i, relations in enumerate(world.charts):
        (out / f"chart{i}.tsv").write_text(TrainingChart(f"chart{i}", relations).to_tsv())
    write_corpus(out / "corpus.jsonl", corpus)
    log.info("wrote %d sentences, %d charts", len(corpus), len(world.charts))
    return world


def run_weak_label(cfg: RunConfig) -> dict:
    out = workdir(cfg)
    lexicon = EntityLexicon.read(out / "lexicon.tsv")
    charts = [TrainingChart.parse(p, lexicon) for p in _chart_paths(out)]
    sets = build_sentence_sets(read_corpus(out / "corpus.jsonl"), lexicon)
    labeled, unlabeled = weak_label(sets, charts)
    write_instances(out / "labeled.jsonl", labeled)
    write_instances(out / "unlabeled.jsonl", unlabeled)
    missing = missing_pairs(sets, charts)
    (out / "missing_pairs.tsv").write_text("".join(f"{a}\t{b}\n" for a, b in missing))
    summary = {"labeled": len(labeled), "unlabeled": len(unlabeled), "pairs": len(sets), "missing_pairs": len(missing)}
    log.info("weak labels: %s", summary)
    return summary


def _cnn_config(cfg: RunConfig) -> CnnConfig:
    c = cfg.cnn
    return CnnConfig(c.L, c.D_max, c.K, c.h, c.d_w, c.d_p, c.d_c, c.dropout_p, c.l2, c.lr)


def _re_vocab(out: Path) -> Vocab:
    return build_vocab(read_instances(out / "labeled.jsonl") + read_instances(out / "unlabeled.jsonl"))


def _num_charts(out: Path) -> int:
    return len(_chart_paths(out))


def run_train_re(cfg: RunConfig, folds: list[int] | None = None, include_all: bool = True) -> dict:
    """One model per held-out chart, plus one trained on every chart."""
    out = workdir(cfg)
    labeled = read_instances(out / "labeled.jsonl")
    vocab = _re_vocab(out)
    _write_json(out / "re_vocab.json", vocab.to_json())
    folds = list(range(_num_charts(out))) if folds is None else folds
    targets = [(f"fold{i}", [x for x in labeled if x.chart != i], cfg.seed + 1 + i) for i in folds]
    if include_all:
        targets.append(("all", labeled, cfg.seed))
    losses = {}
    for name, instances, seed in targets:
        model = RelationCNN(_cnn_config(cfg), vocab, seed=seed, embedding_file=cfg.re_train.embedding_file)
        hist = train_re(model, instances, cfg.re_train.epochs, seed, cfg.re_train.batch_size)
        checkpoint.save(out / f"re_{name}.ckpt.json", model.params)
        losses[name] = hist.epoch_losses
    return losses


def _load_re(cfg: RunConfig, name: str) -> RelationCNN:
    out = workdir(cfg)
    vocab = Vocab(json.loads((out / "re_vocab.json").read_text()))
    model = RelationCNN(_cnn_config(cfg), vocab)
    checkpoint.load_into(out / f"re_{name}.ckpt.json", model.params)
    return model


def _group(instances) -> dict:
    sets: dict = {}
    for inst in instances:
        sets.setdefault(tuple(inst.pair), []).append(inst)
    return dict(sorted(sets.items()))


def run_eval_re(cfg: RunConfig) -> dict:
    """Pool held-out pair scores over all folds into one PR curve."""
    out = workdir(cfg)
    labeled = read_instances(out / "labeled.jsonl")
    scores, positives = {}, set()
    for i in range(_num_charts(out)):
        held = [x for x in labeled if x.chart == i]
        if not held:
            continue
        model = _load_re(cfg, f"fold{i}")
        for pair, (p, _) in model.score_pairs(_group(held)).items():
            key = f"{pair[0]}|{pair[1]}"
            scores[key] = p
        positives |= {f"{x.pair[0]}|{x.pair[1]}" for x in held if x.label}
    points = pr_curve(scores, positives)
    (out / "pr_curve.csv").write_text(pr_csv(points))
    plotting.plot_pr_curve(points, out / "pr_curve.png")
    metrics = {
        "pairs": len(scores),
        "positives": len(positives),
        "positive_rate": len(positives) / len(scores),
        "average_precision": average_precision(points),
        "precision_at_recall_0.9": precision_at_recall(points, 0.9),
    }
    lines = ["metric,value"] + [f"{k},{v!r}" for k, v in metrics.items()]
    (out / "re_metrics.csv").write_text("\n".join(lines) + "\n")
    _write_json(out / "pair_scores.json", scores)
    return metrics


def run_build_chart(cfg: RunConfig, properties=None, n: int | None = None, m: int | None = None):
    out = workdir(cfg)
    lexicon = EntityLexicon.read(out / "lexicon.tsv")
    instances = read_instances(out / "labeled.jsonl") + read_instances(out / "unlabeled.jsonl")
    allowed = {frozenset(("Process", "Structure")), frozenset(("Structure", "Property"))}
    sets = {pair: sents for pair, sents in _group(instances).items()
            if frozenset(lexicon.category(e) for e in pair) in allowed}
    scored = _load_re(cfg, "all").score_pairs(sets)
    graph = PsppGraph(dict(lexicon.entries), {p: s for p, (s, _) in scored.items()},
                      {p: text for p, (_, text) in scored.items()})
    c = cfg.chart
    props = [p.replace(" ", "_").lower() for p in (properties or c.properties)]
    chart = build_chart(graph, props, n or c.n, m or c.m, c.all_structures)
    (out / "chart.json").write_text(chart.to_json() + "\n")
    (out / "chart.dot").write_text(chart.to_dot())
    return chart


def run_re_pipeline(cfg: RunConfig) -> dict:
    run_gen_re_corpus(cfg)
    run_weak_label(cfg)
    run_train_re(cfg)
    metrics = run_eval_re(cfg)
    run_build_chart(cfg)
    return metrics
