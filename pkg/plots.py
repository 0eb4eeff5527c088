"""
SVG renderings of experiment results (matplotlib, Agg backend).

- PR curves, one line per (omega, sigma) cell, points along min_corrs
- F1 grid heat map (rows sigma, columns omega)
- Parameter sweep (best F1 per tau / gamma value)
- Merged map scatter, optionally over the ground-truth forest
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

_SVG_METADATA = {"Date": None}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata=_SVG_METADATA)
    plt.close(fig)
    logger.debug("Wrote %s", path)
    return path


def plot_pr_curves(pr_curves: pd.DataFrame, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 5))
    for (omega, sigma), cell in pr_curves.groupby(["omega", "sigma"]):
        cell = cell.sort_values("min_corrs")
        ax.plot(cell["recall"], cell["precision"], marker="o", label=f"ω={omega:g}, σ={sigma:g}")
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    return _save(fig, path)


def plot_f1_grid(f1_grid: pd.DataFrame, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    im = ax.imshow(f1_grid.to_numpy(dtype=float), vmin=0, vmax=1, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(f1_grid.columns)), [f"{c:g}" for c in f1_grid.columns])
    ax.set_yticks(range(len(f1_grid.index)), [f"{r:g}" for r in f1_grid.index])
    ax.set_xlabel("ω (detection probability)")
    ax.set_ylabel("σ (m)")
    for r in range(f1_grid.shape[0]):
        for c in range(f1_grid.shape[1]):
            ax.text(c, r, f"{f1_grid.iat[r, c]:.2f}", ha="center", va="center", color="white", fontsize=8)
    fig.colorbar(im, ax=ax, label="F1")
    return _save(fig, path)


def plot_sweep(sweep: pd.DataFrame, name: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = ["all" if pd.isna(v) else f"{v:g}" for v in sweep[name]]
    ax.plot(range(len(sweep)), sweep["best_f1"], marker="o")
    ax.set_xticks(range(len(sweep)), labels)
    ax.set_xlabel(name)
    ax.set_ylabel("best F1")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_merged_map(landmarks: np.ndarray, path: Path, truth: Optional[np.ndarray] = None) -> Path:
    fig, ax = plt.subplots(figsize=(7, 7))
    if truth is not None and len(truth):
        ax.scatter(truth[:, 0], truth[:, 1], s=10, c="lightgray", label="ground truth")
    if len(landmarks):
        ax.scatter(landmarks[:, 0], landmarks[:, 1], s=6, c="tab:green", label="merged")
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.legend(fontsize=8)
    return _save(fig, path)
