"""Command-line entry point: ``refreader <command> [--config FILE] [--set key=value ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, RunConfig, load
from .trainer import MODEL_KINDS

log = logging.getLogger("refreader")

GRADCHECK_TOL = 1e-4


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x for x in text.split(",") if x]


def _table(header, rows) -> str:
    return "\n".join(["\t".join(header)] + ["\t".join(str(v) for v in r) for r in rows])


def cmd_gen_wikihop(cfg: RunConfig, args) -> int:
    train, dev = pipeline.run_gen_wikihop(cfg)
    print(_table(["split", "questions"], [["train", len(train)], ["dev", len(dev)]]))
    return 0


def cmd_train_reader(cfg: RunConfig, args) -> int:
    for kind in args.kinds:
        res = pipeline.run_train_reader(cfg, kind)
        print(_table(["model", "epoch", "loss"], [[kind, i + 1, f"{v:.6f}"] for i, v in enumerate(res["epoch_losses"])]))
    return 0


def cmd_eval_reader(cfg: RunConfig, args) -> int:
    acc = pipeline.run_eval_reader(cfg, args.kinds)
    print(_table(["model", "accuracy"], [[k, f"{v:.4f}"] for k, v in acc.items()]))
    return 0


def cmd_memprofile(cfg: RunConfig, args) -> int:
    rows = pipeline.run_memprofile(cfg, args.paragraphs, args.length)
    header = ["paragraphs", "two_pass_peak", "naive_peak", "pass1_peak", "pinned", "parameters"]
    print(_table(header, [[r[h] for h in header] for r in rows]))
    peaks = [r["two_pass_peak"] for r in rows]
    log.info("two-pass peak spread max/min = %.4f", max(peaks) / min(peaks))
    return 0


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    from .gradcheck import run_suite

    errors = run_suite(cfg.seed)
    print(_table(["case", "rel_error", "status"],
                 [[k, f"{v:.3e}", "ok" if v < GRADCHECK_TOL else "FAIL"] for k, v in errors.items()]))
    bad = [k for k, v in errors.items() if not v < GRADCHECK_TOL]
    if bad:
        _error("GradientCheckFailed", f"{len(bad)} case(s) at or above {GRADCHECK_TOL}: {', '.join(bad)}")
        return 1
    return 0


def cmd_gen_re_corpus(cfg: RunConfig, args) -> int:
    world = pipeline.run_gen_re_corpus(cfg)
    print(_table(["entities", "charts"], [[len(world.lexicon), len(world.charts)]]))
    return 0


def cmd_weak_label(cfg: RunConfig, args) -> int:
    summary = pipeline.run_weak_label(cfg)
    print(_table(list(summary), [list(summary.values())]))
    return 0


def cmd_train_re(cfg: RunConfig, args) -> int:
    losses = pipeline.run_train_re(cfg, args.folds)
    print(_table(["model", "epoch", "loss"],
                 [[name, i + 1, f"{v:.6f}"] for name, hist in losses.items() for i, v in enumerate(hist)]))
    return 0


def cmd_eval_re(cfg: RunConfig, args) -> int:
    metrics = pipeline.run_eval_re(cfg)
    print(_table(["metric", "value"], [[k, v] for k, v in metrics.items()]))
    return 0


def cmd_build_chart(cfg: RunConfig, args) -> int:
    chart = pipeline.run_build_chart(cfg, args.properties, args.n, args.m)
    rows = [["Process", p.name, f"{p.capacity:.6f}"] for p in chart.processes]
    rows += [["Structure", s.name, f"{s.capacity:.6f}"] for s in chart.structures]
    rows += [["Property", q, ""] for q in chart.properties]
    print(_table(["category", "entity", "capacity"], rows))
    if chart.shortfall:
        log.warning("chart shortfall: %s", chart.shortfall)
    return 0


def cmd_run_pipeline(cfg: RunConfig, args) -> int:
    metrics = pipeline.run_re_pipeline(cfg)
    print(_table(["metric", "value"], [[k, v] for k, v in metrics.items()]))
    return 0


COMMANDS = {
    "gen-wikihop": (cmd_gen_wikihop, "generate synthetic multi-hop questions"),
    "train-reader": (cmd_train_reader, "train reader models (full, independent, oracle)"),
    "eval-reader": (cmd_eval_reader, "dev accuracy of trained readers"),
    "memprofile": (cmd_memprofile, "peak retained scalars, two-pass vs full retention"),
    "gradcheck": (cmd_gradcheck, "finite-difference check of every op and both models"),
    "gen-re-corpus": (cmd_gen_re_corpus, "generate lexicon, charts and sentence corpus"),
    "weak-label": (cmd_weak_label, "label sentences from the training charts"),
    "train-re": (cmd_train_re, "train relation CNNs (one per held-out chart plus one on all)"),
    "eval-re": (cmd_eval_re, "pooled held-out PR curve (CSV + PNG)"),
    "build-chart": (cmd_build_chart, "extract a PSPP chart (JSON + DOT)"),
    "run-pipeline": (cmd_run_pipeline, "gen-re-corpus, weak-label, train-re, eval-re, build-chart"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refreader", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="RunConfig JSON file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. --set cnn.lr=5e-5 (repeatable)")
        p.add_argument("--workdir", help="shorthand for --set workdir=DIR")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("train-reader", "eval-reader"):
            p.add_argument("--kinds", type=_str_list, default=list(MODEL_KINDS),
                           help="comma-separated subset of " + ",".join(MODEL_KINDS))
        if name == "memprofile":
            p.add_argument("--paragraphs", type=_int_list, default=None)
            p.add_argument("--length", type=int, default=None, help="tokens per paragraph")
        if name == "train-re":
            p.add_argument("--folds", type=_int_list, default=None)
        if name == "build-chart":
            p.add_argument("--properties", type=_str_list, default=None)
            p.add_argument("-n", type=int, default=None, help="max processes")
            p.add_argument("-m", type=int, default=None, help="max structures")
    return parser


def _error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = list(args.overrides) + ([f"workdir={args.workdir}"] if args.workdir else [])
    try:
        cfg = load(args.config, overrides)
        if getattr(args, "kinds", None):
            unknown = sorted(set(args.kinds) - set(MODEL_KINDS))
            if unknown:
                raise ConfigError(f"unknown reader kind(s): {', '.join(unknown)}")
        out = pipeline.workdir(cfg)
        (out / f"config.{args.command}.json").write_text(cfg.to_json() + "\n")
        log.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
        return COMMANDS[args.command][0](cfg, args)
    except (ValueError, OSError, KeyError) as exc:
        _error(type(exc).__name__, str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
