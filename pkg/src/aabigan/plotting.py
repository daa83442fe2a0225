"""Figure helpers for run reports."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0

STYLE = {
    "font.size": 9,
    "font.family": "serif",
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

GROUP_ORDER = ("normal", "seen anomaly", "novel anomaly")
GROUP_COLORS = {"normal": "#4c72b0", "seen anomaly": "#dd8452", "novel anomaly": "#c44e52"}


def figure(width: float = 3.4, height: float | None = None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height or width * GOLDEN))
    return fig, ax


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig.savefig(path)
    plt.close(fig)
    return path


def recon_error_boxplot(scores: np.ndarray, groups: Sequence[str], path, title: str = "",
                        log_scale: bool = True) -> Path:
    """Boxplot of reconstruction errors split into normal / seen-anomaly / novel-anomaly groups."""
    scores = np.asarray(scores, dtype=np.float64)
    groups = np.asarray(groups)
    present = [g for g in GROUP_ORDER if (groups == g).any()]
    data = [scores[groups == g] for g in present]
    with plt.rc_context(STYLE):
        fig, ax = figure()
        box = ax.boxplot(data, patch_artist=True, showfliers=False, widths=0.55)
        ax.set_xticks(range(1, len(present) + 1), present)
        for patch, g in zip(box["boxes"], present):
            patch.set_facecolor(GROUP_COLORS[g])
            patch.set_alpha(0.8)
        for med in box["medians"]:
            med.set_color("black")
        if log_scale and all((d > 0).all() for d in data if len(d)):
            ax.set_yscale("log")
        ax.set_ylabel("reconstruction error")
        if title:
            ax.set_title(title)
    return save(fig, path)

