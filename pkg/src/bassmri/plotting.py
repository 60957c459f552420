"""Figures for the CLI report path, written next to the CSV outputs.

Everything renders through the Agg backend, so no display is needed.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import SamplingPattern  # noqa: E402
from .data import mask_frames  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_convergence(series: dict, path, n_items: int, target: float | None = None,
                     log_x: bool = True) -> Path:
    """Cost against epochs (recon calls / ``n_items``) for one or more traces.

    ``series`` maps a label to a list of trace rows; only accepted rows are
    drawn for BASS-like traces so the curve shows the running cost.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.2))
        for label, rows in series.items():
            acc = [r for r in rows if r.accepted]
            if not acc:
                continue
            x = np.array([max(r.recon_calls_cum, 1) for r in acc], dtype=float) / n_items
            y = np.array([r.F for r in acc])
            ax.step(x, y, where="post", label=label, lw=1.2)
        if target is not None:
            ax.axhline(target, color="0.4", ls=":", lw=1)
        if log_x:
            ax.set_xscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("training cost F")
        if len(series) > 1:
            ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_masks(pattern: SamplingPattern, path, max_frames: int = 8) -> Path:
    """One panel per frame; locked points drawn brighter than learned ones."""
    frames = mask_frames(pattern)[:max_frames]
    n = len(frames)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, n, figsize=(1.8 * n + 0.4, 2.0), squeeze=False)
        for t, (ax, fr) in enumerate(zip(axes[0], frames)):
            ax.imshow(fr, cmap="gray", vmin=0, vmax=255, interpolation="nearest")
            ax.set_title(f"t={t}" if n > 1 else f"M={pattern.size}")
            ax.set_xticks([])
            ax.set_yticks([])
        fig.tight_layout()
        return _save(fig, path)


def plot_maps(eps: np.ndarray, rmap: np.ndarray, shape: tuple, path, frame: int = 0) -> Path:
    """Log-scaled eps-map and r-map of one frame side by side (brighter is higher)."""
    nt, ny, nx = shape
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(5.2, 2.6))
        for ax, m, title in zip(axes, (eps, rmap), ("eps-map", "r-map")):
            img = np.asarray(m, dtype=float).reshape(nt, ny, nx)[frame]
            pos = img[img > 0]
            floor = pos.min() if pos.size else 1.0
            ax.imshow(np.log10(np.maximum(img, floor)), cmap="gray", interpolation="nearest")
            ax.set_title(title)
            ax.set_xticks([])
            ax.set_yticks([])
        fig.tight_layout()
        return _save(fig, path)


def plot_lambda_sweep(lams, costs, path, chosen: float | None = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 2.6))
        ax.loglog(lams, costs, "o-", ms=3, lw=1)
        if chosen is not None:
            ax.axvline(chosen, color="0.4", ls=":", lw=1)
        ax.set_xlabel("lambda")
        ax.set_ylabel("training cost F")
        fig.tight_layout()
        return _save(fig, path)
