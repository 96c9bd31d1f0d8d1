"""Figure rendering for CLI reports; every writer saves a PNG next to its data file."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_RC = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def figure_path(out: str | Path, suffix: str) -> Path:
    out = Path(out)
    return out.with_name(f"{out.stem}_{suffix}.png")


def plot_rank_scores(entries: Sequence, source: str, mode: str, path: Path) -> Path:
    """Score-versus-rank curve for one ranking report."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        scores = [e.score for e in entries]
        ax.plot(range(1, len(scores) + 1), scores, marker="o", markersize=3, lw=1)
        ax.set_xlabel("rank")
        ax.set_ylabel("total score")
        ax.set_title(f"{source} ({mode})")
        return _save(fig, path)


def plot_loss_trace(trace: Sequence, path: Path) -> Path:
    """Training loss plus held-out intra/inter cosine means over steps."""
    steps = [r.step for r in trace]
    with plt.rc_context(_RC):
        fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.2))
        top.plot(steps, [r.loss for r in trace], lw=0.7, color="tab:gray")
        top.set_ylabel("loss")
        bottom.plot(steps, [r.mean_intra_cos for r in trace], label="intra", color="tab:blue")
        bottom.plot(steps, [r.mean_inter_cos for r in trace], label="inter", color="tab:red")
        bottom.set_xlabel("step")
        bottom.set_ylabel("mean cosine")
        bottom.legend()
        return _save(fig, path)


def plot_metrics(report, path: Path) -> Path:
    """Per-source MPR/MRR spread and aggregate HR@k bars."""
    with plt.rc_context(_RC):
        fig, (left, right) = plt.subplots(1, 2, figsize=(7.5, 3.6))
        sources = list(report.per_source)
        left.scatter(
            [report.per_source[s]["mpr"] for s in sources],
            [report.per_source[s]["mrr"] for s in sources],
            s=14,
            alpha=0.7,
        )
        left.axvline(report.mpr, color="tab:blue", lw=0.8, ls="--")
        left.axhline(report.mrr, color="tab:red", lw=0.8, ls="--")
        left.set_xlabel("per-source MPR")
        left.set_ylabel("per-source MRR")
        ks = sorted(report.hr)
        right.bar([str(k) for k in ks], [report.hr[k] for k in ks], color="tab:green")
        right.set_xlabel("k")
        right.set_ylabel("HR@k")
        right.set_ylim(0, 1.05)
        return _save(fig, path)


def plot_ablation(results: Mapping[str, Mapping[str, float]], path: Path) -> Path:
    """Grouped bars of MPR and MRR per ranking configuration."""
    labels = list(results)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7.5, 4.0))
        xs = range(len(labels))
        width = 0.38
        ax.bar([x - width / 2 for x in xs], [results[l]["mpr"] for l in labels], width, label="MPR")
        ax.bar([x + width / 2 for x in xs], [results[l]["mrr"] for l in labels], width, label="MRR")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(labels, rotation=20, ha="right")
        ax.set_ylim(0, 1.05)
        ax.legend()
        return _save(fig, path)
