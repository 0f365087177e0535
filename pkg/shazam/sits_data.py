"""
Ingestion and preparation of a region-of-interest satellite image time series.

Rasters are discovered by filename (``<prefix>_<YYYY-MM-DD>.<ext>``), validated,
normalised with percentile bounds from the training period, reduced to a
median baseline and cut into the patch grid SIU-Net trains on.
"""

import datetime as dt
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
import rasterio
from rasterio.errors import RasterioIOError
from pydantic import ValidationError

from .errors import SitsDataError
from .models import (
    PATCH_SIZE, BaselineImage, NormStats, PatchSample, SitsDataset, SitsImage,
)

logger = logging.getLogger(__name__)

RASTER_SUFFIXES = {".tif", ".tiff"}
DATE_PATTERN = re.compile(r"(\d{4}-\d{2}-\d{2})")


# === Loading ===
def parse_filename_date(path: Path) -> dt.date:
    """ISO date embedded in the file name; the last match wins."""
    matches = DATE_PATTERN.findall(path.stem)
    if not matches:
        raise SitsDataError(f"no ISO date (YYYY-MM-DD) in file name {path.name}")
    try:
        return dt.date.fromisoformat(matches[-1])
    except ValueError:
        raise SitsDataError(f"unparseable date {matches[-1]!r} in file name {path.name}")


def _read_raster(path: Path, band_order: Sequence[int] | None) -> np.ndarray:
    try:
        with rasterio.open(path) as src:
            indexes = list(band_order) if band_order is not None else list(range(1, src.count + 1))
            if max(indexes) > src.count:
                raise SitsDataError(f"{path.name} has {src.count} bands, band order asks for {max(indexes)}")
            return src.read(indexes=indexes).astype(np.float32)
    except RasterioIOError as e:
        raise SitsDataError(f"cannot read raster {path.name}: {e}")


def _load_one(path: Path, band_order: Sequence[int] | None) -> SitsImage:
    date = parse_filename_date(path)
    bands = _read_raster(path, band_order)
    if not np.all(np.isfinite(bands)):
        bad = int((~np.isfinite(bands)).sum())
        raise SitsDataError(f"{path.name} contains {bad} non-finite pixel values")
    return SitsImage(bands=bands, date=date, source=path.name)


def validate_dataset(
    images: Sequence[SitsImage],
    channels: int | None = None,
    patch: int = PATCH_SIZE,
) -> None:
    """Check channel count, patch divisibility and uniform shape; errors name the file."""
    if not images:
        return
    reference = images[0]
    for img in images:
        name = img.source or str(img.date)
        c, h, w = img.shape
        if channels is not None and c != channels:
            raise SitsDataError(f"{name} has {c} channels, expected {channels}")
        if h % patch or w % patch:
            raise SitsDataError(f"{name} is {h}x{w}, not divisible by patch size {patch}")
        if img.shape != reference.shape:
            raise SitsDataError(
                f"shape mismatch: {name} is {img.shape}, {reference.source or reference.date} is {reference.shape}"
            )


def load_sits_files(
    files: Sequence[str | Path],
    band_order: Sequence[int] | None = None,
    *,
    channels: int | None = None,
    patch: int = PATCH_SIZE,
    role: Literal["train", "test"] = "train",
    workers: int = 4,
) -> SitsDataset:
    """
    Load the given rasters into a date-sorted dataset.

    Files are read concurrently; the result is sorted by date afterwards so
    the outcome does not depend on completion order.
    """
    paths = [Path(f) for f in files]
    for p in paths:
        if not p.is_file():
            raise SitsDataError(f"raster not found: {p}")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        images = list(pool.map(lambda p: _load_one(p, band_order), paths))
    images.sort(key=lambda img: img.date)

    for prev, cur in zip(images, images[1:]):
        if cur.date == prev.date:
            raise SitsDataError(f"duplicate acquisition date {cur.date}: {prev.source} and {cur.source}")
    validate_dataset(images, channels=channels, patch=patch)
    return SitsDataset(images=images, role=role)


def load_sits_directory(
    path: str | Path,
    band_order: Sequence[int] | None = None,
    *,
    channels: int | None = None,
    patch: int = PATCH_SIZE,
    role: Literal["train", "test"] = "train",
    workers: int = 4,
) -> SitsDataset:
    """Load every raster in ``path``; see load_sits_files."""
    directory = Path(path)
    if not directory.is_dir():
        raise SitsDataError(f"data directory not found: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in RASTER_SUFFIXES)
    if not files:
        raise SitsDataError(f"no rasters ({', '.join(sorted(RASTER_SUFFIXES))}) in {directory}")
    dataset = load_sits_files(files, band_order, channels=channels, patch=patch, role=role, workers=workers)
    logger.info("[sits_data.load] %d %s images from %s", len(dataset), role, directory)
    return dataset


# === Normalisation ===
def compute_norm_stats(train: SitsDataset, per_channel: bool = False) -> NormStats:
    """
    1st / 99th percentiles of the training data, linear interpolation between
    order statistics. Pooled over all channels unless ``per_channel``.
    """
    if len(train) == 0:
        raise SitsDataError("cannot compute normalisation stats of an empty dataset")
    stack = train.stack().astype(np.float64)
    channels = stack.shape[1]
    if per_channel:
        pooled = np.moveaxis(stack, 1, 0).reshape(channels, -1)
        p1, p99 = np.percentile(pooled, [1, 99], axis=1, method="linear")
        if np.any(p99 <= p1):
            raise SitsDataError("degenerate normalisation stats: a channel is constant")
        return NormStats(p1=p1.tolist(), p99=p99.tolist(), channels=channels)
    p1, p99 = np.percentile(stack, [1, 99], method="linear")
    if p99 <= p1:
        raise SitsDataError(f"degenerate normalisation stats: p1 == p99 == {p1}")
    return NormStats(p1=float(p1), p99=float(p99), channels=channels)


def normalize(image: SitsImage, stats: NormStats) -> SitsImage:
    """clamp((x - p1) / (p99 - p1), 0, 1) elementwise."""
    lo, hi = stats.bounds()
    scaled = (image.bands.astype(np.float64) - lo) / (hi - lo)
    return image.with_bands(np.clip(scaled, 0.0, 1.0).astype(np.float32))


def normalize_dataset(dataset: SitsDataset, stats: NormStats) -> SitsDataset:
    return SitsDataset(images=[normalize(img, stats) for img in dataset.images], role=dataset.role)


# === Baseline ===
def compute_baseline(
    train_normalized: SitsDataset,
    exclude: Iterable[tuple[dt.date, int, int]] | None = None,
    patch: int = PATCH_SIZE,
) -> BaselineImage:
    """
    Per-pixel, per-channel median over the normalised training images.

    ``exclude`` lists (date, row, col) patches held out for validation; those
    positions take the median over their remaining dates. A position whose
    every date is excluded falls back to the full-image median.
    """
    if len(train_normalized) == 0:
        raise SitsDataError("cannot compute a baseline from an empty dataset")
    stack = train_normalized.stack().astype(np.float64)
    baseline = np.median(stack, axis=0)

    excluded: dict[tuple[int, int], set[dt.date]] = {}
    for date, row, col in exclude or []:
        excluded.setdefault((row, col), set()).add(date)
    dates = train_normalized.dates
    fallbacks = 0
    for (row, col), held_out in excluded.items():
        keep = [i for i, d in enumerate(dates) if d not in held_out]
        if len(keep) == len(dates):
            continue
        rs, cs = slice(row * patch, (row + 1) * patch), slice(col * patch, (col + 1) * patch)
        if not keep:
            fallbacks += 1
            continue
        baseline[:, rs, cs] = np.median(stack[keep][:, :, rs, cs], axis=0)
    if fallbacks:
        logger.warning(
            "[sits_data.compute_baseline] %d patch positions are validation-only; using the full-image median there",
            fallbacks,
        )
    return BaselineImage(bands=baseline.astype(np.float32))


# === Patches ===
def patch_grid_shape(shape: Sequence[int], patch: int = PATCH_SIZE) -> tuple[int, int]:
    h, w = shape[-2], shape[-1]
    if h % patch or w % patch:
        raise SitsDataError(f"image of {h}x{w} is not divisible by patch size {patch}")
    return h // patch, w // patch


def extract_patch_grid(image: SitsImage, baseline: BaselineImage, patch: int = PATCH_SIZE) -> list[PatchSample]:
    """Non-overlapping patches in row-major order, each tagged with the image's day of year."""
    if image.shape != baseline.shape:
        raise SitsDataError(f"image {image.date} shape {image.shape} differs from baseline {baseline.shape}")
    n_rows, n_cols = patch_grid_shape(image.shape, patch)
    samples = []
    try:
        for r in range(n_rows):
            for c in range(n_cols):
                rs, cs = slice(r * patch, (r + 1) * patch), slice(c * patch, (c + 1) * patch)
                samples.append(PatchSample(
                    baseline_patch=baseline.bands[:, rs, cs],
                    target_patch=image.bands[:, rs, cs],
                    day_of_year=image.day_of_year,
                    row=r,
                    col=c,
                    n_rows=n_rows,
                    n_cols=n_cols,
                    date=image.date,
                ))
    except ValidationError as e:
        raise SitsDataError(f"invalid patch from image {image.date}: {e}")
    return samples


def stitch_patches(patches: Sequence[np.ndarray] | np.ndarray, n_rows: int, n_cols: int) -> np.ndarray:
    """Inverse of the patch grid: row-major C x p x p patches back into C x H x W."""
    patches = np.asarray(patches)
    if patches.ndim != 4 or patches.shape[0] != n_rows * n_cols:
        raise SitsDataError(f"expected {n_rows * n_cols} C x p x p patches, got shape {patches.shape}")
    n, c, ph, pw = patches.shape
    grid = patches.reshape(n_rows, n_cols, c, ph, pw)
    return grid.transpose(2, 0, 3, 1, 4).reshape(c, n_rows * ph, n_cols * pw)


# === Splitting ===
def split_indices(n: int, val_fraction: float = 0.10, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded disjoint partition of range(n) into (train, val) index arrays."""
    if n == 0:
        raise SitsDataError("cannot split an empty sample list")
    if not 0.0 < val_fraction < 1.0:
        raise SitsDataError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if n < 2:
        raise SitsDataError("need at least two samples to form train and validation sets")
    n_val = min(n - 1, max(1, int(round(n * val_fraction))))
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def split_train_val(
    samples: Sequence[PatchSample],
    val_fraction: float = 0.10,
    seed: int = 0,
) -> tuple[list[PatchSample], list[PatchSample]]:
    train_idx, val_idx = split_indices(len(samples), val_fraction, seed)
    return [samples[i] for i in train_idx], [samples[i] for i in val_idx]
