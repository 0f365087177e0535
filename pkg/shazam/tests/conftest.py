import datetime as dt

import numpy as np
import pytest

from shazam.config import PathsConfig, RunConfig
from shazam.models import HazardSpec, SceneConfig, SitsDataset, SitsImage, TrainHyperparams
from shazam.utils import write_geotiff


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_scene() -> SceneConfig:
    """64x64x3 scene, two training years every 15 days, one blob in the test year."""
    return SceneConfig(
        height=64,
        width=64,
        channels=3,
        n_land_classes=3,
        cadence_days=15,
        years=2,
        test_years=1,
        start_year=2017,
        hazards=[
            HazardSpec(
                kind="abrupt_blob",
                onset_date=dt.date(2019, 3, 1),
                end_date=dt.date(2019, 5, 1),
                center=(20, 20),
                radius=10,
                magnitude=0.4,
            ),
        ],
    )


@pytest.fixture
def tiny_config(tmp_path, tiny_scene) -> RunConfig:
    return RunConfig(
        paths=PathsConfig(data_dir=tmp_path / "data", artifact_dir=tmp_path / "artifacts"),
        channels=3,
        widths=(4, 8, 16),
        train=TrainHyperparams(epochs=2, batch_size=16),
        scene=tiny_scene,
        load_workers=2,
        seed=0,
    )


def make_image(date: dt.date, shape=(3, 64, 64), value: float | None = None, seed: int = 0) -> SitsImage:
    if value is None:
        bands = np.random.default_rng(seed).random(shape, dtype=np.float32)
    else:
        bands = np.full(shape, value, dtype=np.float32)
    return SitsImage(bands=bands, date=date, source=f"roi_{date}.tif")


def make_dataset(dates, shape=(3, 64, 64), role="train") -> SitsDataset:
    return SitsDataset(images=[make_image(d, shape, seed=i) for i, d in enumerate(dates)], role=role)


def write_rasters(directory, images) -> list:
    return [write_geotiff(directory / f"roi_{img.date}.tif", img.bands) for img in images]
