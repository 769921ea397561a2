"""Report figures: PPSL learning curves, pseudo-label quality bars, cluster-count sweep.

Everything renders off-screen to files; nothing here opens a window.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (5.5, 3.6),
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def strategy_curves(curves: Mapping[str, Sequence[tuple[int, float, float]]], path: str | Path,
                    ylabel: str = "R-1 (%)") -> Path:
    """One line per strategy of ``(cycle, mean, std)`` points; std drawn as a band."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for name, pts in curves.items():
            if not pts:
                continue
            x, m, s = (np.asarray(v, dtype=float) for v in zip(*pts))
            ax.plot(x, m, marker="o", ms=3, label=name)
            if np.any(s > 0):
                ax.fill_between(x, m - s, m + s, alpha=0.15)
        ax.set_xlabel("cycle")
        ax.set_ylabel(ylabel)
        ax.legend(loc="best")
        return _save(fig, path)


def quality_bars(values: Mapping[str, tuple[float, float]], path: str | Path,
                 ylabel: str = "selected pseudo-label R-2 (%)") -> Path:
    """Bar per strategy: ``name -> (mean, std)``."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        names = list(values)
        means = [values[n][0] for n in names]
        stds = [values[n][1] for n in names]
        ax.bar(range(len(names)), means, yerr=stds, capsize=3, color="0.55")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=20, ha="right")
        ax.set_ylabel(ylabel)
        return _save(fig, path)


def sweep_plot(rows: Sequence[Mapping[str, float]], path: str | Path, metric: str = "rouge2",
               ylabel: str = "validation R-2 (%)") -> Path:
    """Validation score against the number of clusters ``T``."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        rows = sorted(rows, key=lambda r: r["T"])
        ax.plot([r["T"] for r in rows], [100 * r[metric] for r in rows], marker="s")
        ax.set_xlabel("T (clusters)")
        ax.set_ylabel(ylabel)
        return _save(fig, path)
