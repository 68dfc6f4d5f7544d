"""Figures for reports and sweeps, written to files (Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .profiler import GrowthTable, PhaseReport, breakdown  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
HATCHES = ("..", "xx", "//", "\\\\")
COLORS = ("0.85", "0.6", "0.4", "0.2")


def _stacked(ax, labels, rows, names, title):
    left = np.zeros(len(labels))
    y = np.arange(len(labels))
    for k, name in enumerate(names):
        vals = np.array([r[k] for r in rows])
        ax.barh(y, vals, left=left, color=COLORS[k % 4], hatch=HATCHES[k % 4], edgecolor="k", label=name, height=0.6)
        for yy, l, v in zip(y, left, vals):
            if v >= 6:
                ax.text(l + v / 2, yy, f"{v:.0f}%", ha="center", va="center", fontsize=7)
        left += vals
    ax.set_yticks(y)
    ax.set_yticklabels(labels)
    ax.set_xlim(0, 100)
    ax.set_xlabel("share of time (%)")
    ax.set_title(title)
    ax.legend(loc="upper center", bbox_to_anchor=(0.5, -0.25), ncol=len(names), frameon=False)


def plot_breakdown(reports: Sequence[PhaseReport], path: str | Path) -> Path:
    """Top-level and update-detail stacked bars, one row per report."""
    labels = [f"N={r.metadata.get('n_agents', '?')}\n[{r.leaf_seconds:.0f}s]" for r in reports]
    top = [[p for _, _, p in breakdown(r, "top_level")] for r in reports]
    detail = [[p for _, _, p in breakdown(r, "update_detail")] for r in reports]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(9, 1.2 + 0.6 * len(reports)))
        _stacked(axes[0], labels, top, ["Action selection", "Update all trainers", "Other"], "Training time breakdown")
        _stacked(axes[1], labels, detail, ["Mini-batch sampling", "Target Q", "Q loss", "P loss"],
                 "Within update all trainers")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return Path(path)


def plot_growth(table: GrowthTable, path: str | Path, reference: Optional[Dict[str, Dict[str, float]]] = None,
                phases: Sequence[str] = ("MiniBatchSampling", "TargetQCalculation", "QPLoss", "ActionSelection")) -> Path:
    """Per-doubling growth ratios, measured bars with reference markers."""
    pairs = table.pairs
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(phases), figsize=(2.6 * len(phases), 2.6), sharey=True)
        for ax, phase in zip(np.atleast_1d(axes), phases):
            x = np.arange(len(pairs))
            vals = [table.ratios[p].get(phase, np.nan) for p in pairs]
            ax.bar(x, vals, color="0.7", edgecolor="k", hatch="..", label="measured")
            if reference:
                refs = [reference.get(p, {}).get(phase, np.nan) for p in pairs]
                ax.plot(x, refs, "kD", ms=5, label="reference")
            ax.set_xticks(x)
            ax.set_xticklabels(pairs)
            ax.set_xlabel(r"agents ($N \to 2N$)")
            ax.set_title(phase)
        np.atleast_1d(axes)[0].set_ylabel("growth rate (x)")
        np.atleast_1d(axes)[0].legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return Path(path)


def plot_rewards(team_rewards: Sequence[float], path: str | Path, window: int = 50) -> Path:
    r = np.asarray(team_rewards, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(r, color="0.7", lw=0.5)
        if len(r) >= window:
            smooth = np.convolve(r, np.ones(window) / window, mode="valid")
            ax.plot(np.arange(window - 1, len(r)), smooth, "k", lw=1.5)
        ax.set_xlabel("episode")
        ax.set_ylabel("team reward")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return Path(path)
