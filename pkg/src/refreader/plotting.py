"""Figures written next to the CSV/JSON reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

# PNG metadata would otherwise embed the matplotlib version and break byte equality
_SAVE_KW = {"metadata": {"Software": None}, "dpi": 120}


def _style(ax, xlabel, ylabel, title=None):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)


def plot_pr_curve(points, path, label="relation CNN"):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.step([p.recall for p in points], [p.precision for p in points], where="post", label=label)
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.05)
    _style(ax, "recall", "precision", "Precision-recall over entity pairs")
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_memprofile(rows, path):
    """rows: (paragraphs, two_pass_peak, naive_peak)."""
    ks = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(ks, [r[1] for r in rows], "o-", label="two-pass")
    ax.plot(ks, [r[2] for r in rows], "s--", label="full retention")
    ax.set_xscale("log", base=2)
    ax.set_xticks(ks)
    ax.set_xticklabels([str(k) for k in ks])
    _style(ax, "paragraphs per question", "peak retained scalars")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_accuracies(acc: dict, path):
    names = list(acc)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    bars = ax.bar(names, [100 * acc[n] for n in names], color=["#4c72b0", "#dd8452", "#55a868"][: len(names)])
    for b, n in zip(bars, names):
        ax.annotate(f"{100 * acc[n]:.1f}", (b.get_x() + b.get_width() / 2, b.get_height()),
                    ha="center", va="bottom", fontsize=9)
    ax.set_ylim(0, 105)
    _style(ax, "model", "dev accuracy (%)")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_losses(series: dict, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, losses in series.items():
        ax.plot(range(1, len(losses) + 1), losses, "o-", label=name)
    _style(ax, "epoch", "mean training loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
