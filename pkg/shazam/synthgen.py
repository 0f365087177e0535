"""
Deterministic synthetic region-of-interest time series with planted hazards.

A Voronoi land-cover map assigns every pixel a class. Each class has a base
reflectance per channel and its own seasonal phase; observations add
Gaussian noise whose spread itself follows the seasons. The training years
are hazard-free, the test period carries the configured hazards, and every
test date gets a ground-truth mask.
"""

import datetime as dt
import logging
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from .errors import SceneConfigError
from .models import DAYS_PER_YEAR, HazardSpec, SceneConfig, SitsDataset, SitsImage, day_of_year
from .utils import write_csv, write_geotiff

logger = logging.getLogger(__name__)

SEEDS_PER_CLASS = 4
BASE_REFLECTANCE_RANGE = (0.1, 0.5)
DEFAULT_MAGNITUDE = 0.4
DEFAULT_TEXTURE = 0.75
DEFAULT_SHIFT_AMPLITUDE = 0.6
DEFAULT_SHIFT_TEXTURE = 0.5


class SceneModel(BaseModel):
    """Noise-free structure of a scene: land-cover map, class reflectances and phases."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    class_map: np.ndarray
    base: np.ndarray
    phase: np.ndarray
    seasonal_amp: float


class SyntheticScene(NamedTuple):
    train: SitsDataset
    test: SitsDataset
    labels: pd.DataFrame
    masks: dict[dt.date, np.ndarray]


def default_hazards(test_year: int) -> list[HazardSpec]:
    """One hazard of each kind spread over the test year."""
    return [
        HazardSpec(
            kind="abrupt_blob",
            onset_date=dt.date(test_year, 2, 1),
            end_date=dt.date(test_year, 3, 15),
            center=(40, 40),
            radius=18,
            magnitude=DEFAULT_MAGNITUDE,
            texture=DEFAULT_TEXTURE,
        ),
        HazardSpec(
            kind="gradual_growth",
            onset_date=dt.date(test_year, 5, 1),
            end_date=dt.date(test_year, 7, 15),
            center=(88, 80),
            radius=24,
            magnitude=DEFAULT_MAGNITUDE,
        ),
        HazardSpec(
            kind="out_of_season_shift",
            onset_date=dt.date(test_year, 9, 20),
            end_date=dt.date(test_year, 11, 10),
            center=(64, 100),
            radius=18,
            magnitude=DEFAULT_SHIFT_AMPLITUDE,
            shift_days=DAYS_PER_YEAR // 2,
            texture=DEFAULT_SHIFT_TEXTURE,
        ),
    ]


def class_map(config: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    n_seeds = SEEDS_PER_CLASS * config.n_land_classes
    seeds = rng.uniform(0.0, 1.0, size=(n_seeds, 2)) * np.array([config.height, config.width])
    rows, cols = np.mgrid[0:config.height, 0:config.width]
    dist = (rows[None] - seeds[:, 0, None, None]) ** 2 + (cols[None] - seeds[:, 1, None, None]) ** 2
    return (np.argmin(dist, axis=0) % config.n_land_classes).astype(np.int64)


def build_scene_model(config: SceneConfig, rng: np.random.Generator) -> SceneModel:
    classes = class_map(config, rng)
    base = rng.uniform(*BASE_REFLECTANCE_RANGE, size=(config.n_land_classes, config.channels))
    phase = rng.uniform(0.0, DAYS_PER_YEAR, size=config.n_land_classes)
    return SceneModel(class_map=classes, base=base, phase=phase, seasonal_amp=config.seasonal_amp)


def seasonal_term(model: SceneModel, t: float, shift: float = 0.0, amp: float | None = None) -> np.ndarray:
    """Per-pixel seasonal reflectance offset (H x W) at day-of-year ``t + shift``."""
    amp = model.seasonal_amp if amp is None else amp
    per_class = amp * np.sin(2.0 * np.pi * (t + shift - model.phase) / DAYS_PER_YEAR)
    return per_class[model.class_map]


def expected_image(model: SceneModel, t: float) -> np.ndarray:
    """Closed-form noise-free image (float64, C x H x W) at day-of-year ``t``."""
    per_class = model.base[model.class_map]  # H x W x C
    return np.moveaxis(per_class, -1, 0) + seasonal_term(model, t)[None]


def noise_sigma(config: SceneConfig, t: float) -> float:
    """Seasonally modulated noise spread, largest on ``noise_peak_doy``."""
    modulation = np.cos(2.0 * np.pi * (t - config.noise_peak_doy) / DAYS_PER_YEAR)
    return float(config.noise_sigma * (1.0 + config.noise_seasonal_amp * modulation))


def acquisition_dates(config: SceneConfig) -> tuple[list[dt.date], list[dt.date]]:
    start = dt.date(config.start_year, 1, 1)
    end = dt.date(config.start_year + config.years + config.test_years, 1, 1)
    dates, current = [], start
    while current < end:
        dates.append(current)
        current += dt.timedelta(days=config.cadence_days)
    train = [d for d in dates if d < config.test_start]
    return train, [d for d in dates if d >= config.test_start]


def footprint_order(shape: tuple[int, int], center: tuple[int, int], radius: float) -> np.ndarray:
    """Flat indices of the disk pixels, nearest to the centre first, ties by raster index."""
    h, w = shape
    cr, cc = center
    if not (0 <= cr - radius and cr + radius <= h - 1 and 0 <= cc - radius and cc + radius <= w - 1):
        raise SceneConfigError(f"hazard footprint centre {center} radius {radius} leaves the {h}x{w} image")
    rows, cols = np.mgrid[0:h, 0:w]
    dist = np.hypot(rows - cr, cols - cc).ravel()
    index = np.arange(h * w)
    inside = dist <= radius
    order = np.lexsort((index[inside], dist[inside]))
    return index[inside][order]


def hazard_offset(
    hazard: HazardSpec, date: dt.date, mask: np.ndarray, scene: SceneModel | None = None,
) -> np.ndarray:
    """
    Per-pixel reflectance offset (H x W) the hazard applies inside ``mask``.

    ``out_of_season_shift`` swaps the footprint's seasonal term for one
    ``shift_days`` ahead with amplitude ``magnitude``, so it needs the scene model.
    Any kind may carry a zero-mean checkerboard ``texture``.
    """
    offset = np.zeros(mask.shape)
    if hazard.kind == "out_of_season_shift":
        if scene is None:
            raise SceneConfigError("out_of_season_shift needs the scene model to shift its season")
        t = day_of_year(date)
        shifted = seasonal_term(scene, t, shift=hazard.shift_days, amp=hazard.magnitude)
        offset[mask] = (shifted - seasonal_term(scene, t))[mask]
    else:
        offset[mask] = hazard.magnitude
    if hazard.texture > 0 and mask.any():
        rows, cols = np.nonzero(mask)
        checker = np.where((rows + cols) % 2 == 0, 1.0, -1.0)
        # centred so the footprint mean is unchanged
        offset[mask] += hazard.magnitude * hazard.texture * (checker - checker.mean())
    return offset


def active_fraction(hazard: HazardSpec, date: dt.date) -> float:
    """Share of the footprint in effect; grows linearly for gradual hazards."""
    if not hazard.is_active(date):
        return 0.0
    if hazard.kind != "gradual_growth":
        return 1.0
    duration = (hazard.end_date - hazard.onset_date).days
    if duration == 0:
        return 1.0
    return (date - hazard.onset_date).days / duration


def inject_hazard(
    image: np.ndarray, hazard: HazardSpec, date: dt.date, scene: SceneModel | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Add ``hazard`` to a C x H x W image for ``date``.

    Returns the modified copy and the boolean H x W mask of pixels it changed.
    """
    _, h, w = image.shape
    order = footprint_order((h, w), hazard.center, hazard.radius)
    mask = np.zeros(h * w, dtype=bool)
    if not hazard.is_active(date) or hazard.magnitude == 0.0:
        return image.copy(), mask.reshape(h, w)
    n_active = int(round(active_fraction(hazard, date) * order.size))
    mask[order[:n_active]] = True
    mask = mask.reshape(h, w)
    offset = hazard_offset(hazard, date, mask, scene)

    out = image.copy()
    channels = hazard.channels if hazard.channels is not None else range(image.shape[0])
    for ch in channels:
        if not 0 <= ch < image.shape[0]:
            raise SceneConfigError(f"hazard channel {ch} outside 0..{image.shape[0] - 1}")
        out[ch][mask] += offset[mask]
    return out, mask


def resolve_hazards(config: SceneConfig) -> list[HazardSpec]:
    hazards = config.hazards if config.hazards is not None else default_hazards(config.test_start.year)
    for hazard in hazards:
        footprint_order((config.height, config.width), hazard.center, hazard.radius)
        if hazard.onset_date < config.test_start:
            raise SceneConfigError(f"{hazard.kind} starts on {hazard.onset_date}, inside the hazard-free training period")
        if 0 < hazard.magnitude <= 2 * config.noise_sigma:
            logger.warning(
                "[synthgen.resolve_hazards] %s magnitude %.3g is within twice the noise sigma", hazard.kind, hazard.magnitude,
            )
    return hazards


def generate_scene(config: SceneConfig) -> SyntheticScene:
    """Train and test datasets, per-date labels and ground-truth masks; fully determined by the seed."""
    hazards = resolve_hazards(config)
    rng = np.random.default_rng(config.seed)
    model = build_scene_model(config, rng)
    train_dates, test_dates = acquisition_dates(config)
    if not train_dates or not test_dates:
        raise SceneConfigError("scene needs at least one training and one test date")

    def observe(date: dt.date) -> np.ndarray:
        t = day_of_year(date)
        clean = expected_image(model, t)
        sigma = noise_sigma(config, t)
        noise = rng.normal(0.0, sigma, size=clean.shape) if sigma > 0 else 0.0
        return clean + noise

    train = [
        SitsImage(bands=observe(d).astype(np.float32), date=d, source=f"{config.prefix}_{d}.tif")
        for d in train_dates
    ]
    test, labels, masks = [], [], {}
    for d in test_dates:
        bands = observe(d)
        union = np.zeros((config.height, config.width), dtype=bool)
        for hazard in hazards:
            bands, mask = inject_hazard(bands, hazard, d, model)
            union |= mask
        test.append(SitsImage(bands=bands.astype(np.float32), date=d, source=f"{config.prefix}_{d}.tif"))
        masks[d] = union
        labels.append({"date": d.isoformat(), "is_hazard": int(union.any())})

    labels_df = pd.DataFrame(labels, columns=["date", "is_hazard"])
    logger.info(
        "[synthgen.generate_scene] %d train, %d test images, %d hazardous",
        len(train), len(test), int(labels_df["is_hazard"].sum()),
    )
    return SyntheticScene(
        train=SitsDataset(images=train, role="train"),
        test=SitsDataset(images=test, role="test"),
        labels=labels_df,
        masks=masks,
    )


def write_scene(scene: SyntheticScene, out_dir: str | Path, prefix: str = "roi") -> Path:
    """Write the layout load_sits_directory ingests, plus labels.csv and masks/."""
    root = Path(out_dir)
    for dataset, sub in ((scene.train, "train"), (scene.test, "test")):
        for img in dataset.images:
            write_geotiff(root / sub / f"{prefix}_{img.date}.tif", img.bands, dtype="float32")
    for date, mask in scene.masks.items():
        write_geotiff(root / "masks" / f"mask_{date}.tif", mask.astype(np.uint8), dtype="uint8")
    write_csv(scene.labels, root / "labels.csv")
    logger.info("[synthgen.write_scene] scene written to %s", root)
    return root
