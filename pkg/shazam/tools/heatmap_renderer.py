"""
Heatmap and score-plot renderer.

Heatmaps are drawn with the ``hot`` colormap on a fixed 0..1 scale, never
autoscaled, so frames from different dates compare directly.
"""

import logging
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..models import ThresholdModel  # noqa: E402
from ..threshold import tau  # noqa: E402
from ..utils import atomic_path, write_geotiff  # noqa: E402

logger = logging.getLogger(__name__)

HEATMAP_CMAP = "hot"
# Strip the version stamp so reruns produce identical files.
PNG_METADATA = {"Software": None}


def save_heatmap_png(heatmap: np.ndarray, path: str | Path) -> Path:
    if heatmap.ndim != 2:
        raise ValueError(f"heatmap must be H x W, got shape {heatmap.shape}")
    with atomic_path(path) as tmp:
        plt.imsave(tmp, heatmap, cmap=HEATMAP_CMAP, vmin=0.0, vmax=1.0, format="png", metadata=PNG_METADATA)
    return Path(path)


def save_heatmap_raster(heatmap: np.ndarray, path: str | Path) -> Path:
    """Single-band float32 GTiff of the raw heatmap values."""
    return write_geotiff(path, heatmap.astype(np.float32), dtype="float32")


def plot_training_scores(
    days: Sequence[int],
    scores: Sequence[float],
    model: ThresholdModel,
    path: str | Path,
    score_label: str = "SDIM score",
) -> Path:
    """Training-period scores against day of year with tau(t) overlaid."""
    grid = np.arange(1, 366)
    fig, ax = plt.subplots(figsize=(8, 4))
    try:
        ax.scatter(days, scores, s=12, color="tab:blue", label=score_label)
        ax.plot(grid, tau(grid, model), color="tab:red", label=f"threshold ({model.kind})")
        ax.set_xlabel("day of year")
        ax.set_ylabel(score_label)
        ax.set_xlim(1, 365)
        ax.legend(loc="upper right")
        fig.tight_layout()
        with atomic_path(path) as tmp:
            fig.savefig(tmp, format="png", dpi=120, metadata=PNG_METADATA)
    finally:
        plt.close(fig)
    logger.debug("[heatmap_renderer.plot_training_scores] wrote %s", path)
    return Path(path)
