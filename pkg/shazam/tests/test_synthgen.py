import datetime as dt

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from shazam.errors import SceneConfigError
from shazam.models import HazardSpec, SceneConfig, day_of_year
from shazam.sits_data import load_sits_directory
from shazam.synthgen import (
    acquisition_dates, build_scene_model, default_hazards, expected_image, footprint_order, generate_scene,
    inject_hazard, seasonal_term, write_scene,
)
from shazam.utils import read_geotiff

ONSET = dt.date(2019, 3, 1)


def blob(magnitude=0.4, radius=5.5, kind="abrupt_blob", end=dt.date(2019, 4, 30), center=(16, 16), **extra) -> HazardSpec:
    return HazardSpec(
        kind=kind, onset_date=ONSET, end_date=end, center=center, radius=radius, magnitude=magnitude, **extra,
    )


def test_same_seed_same_scene(tiny_scene):
    a, b = generate_scene(tiny_scene), generate_scene(tiny_scene)
    assert all(np.array_equal(x.bands, y.bands) for x, y in zip(a.train.images, b.train.images))
    assert all(np.array_equal(x.bands, y.bands) for x, y in zip(a.test.images, b.test.images))
    assert a.labels.equals(b.labels)


def test_different_seed_differs(tiny_scene):
    a = generate_scene(tiny_scene)
    b = generate_scene(tiny_scene.model_copy(update={"seed": 1}))
    assert not np.array_equal(a.train.images[0].bands, b.train.images[0].bands)


def test_noiseless_scene_matches_closed_form(tiny_scene):
    config = tiny_scene.model_copy(update={"noise_sigma": 0.0, "hazards": []})
    scene = generate_scene(config)
    model = build_scene_model(config, np.random.default_rng(config.seed))
    for img in scene.train.images[:5] + scene.test.images[:5]:
        assert np.array_equal(img.bands, expected_image(model, img.day_of_year).astype(np.float32))
    assert scene.labels["is_hazard"].sum() == 0


def test_half_year_difference_follows_phase(tiny_scene):
    model = build_scene_model(tiny_scene, np.random.default_rng(0))
    t = 40
    diff = expected_image(model, t) - expected_image(model, t + 182)
    angle = 2 * np.pi / 365
    oracle = tiny_scene.seasonal_amp * (
        np.sin(angle * (t - model.phase)) - np.sin(angle * (t + 182 - model.phase))
    )
    assert np.allclose(diff[0], oracle[model.class_map])
    assert np.abs(diff).max() <= 2 * tiny_scene.seasonal_amp + 1e-12


def test_train_period_hazard_free_test_period_labelled(tiny_scene):
    scene = generate_scene(tiny_scene)
    assert all(d < tiny_scene.test_start for d in scene.train.dates)
    assert all(d >= tiny_scene.test_start for d in scene.test.dates)
    hazard = tiny_scene.hazards[0]
    for row in scene.labels.itertuples():
        date = dt.date.fromisoformat(row.date)
        assert row.is_hazard == int(hazard.is_active(date))


def test_zero_magnitude_changes_nothing():
    image = np.random.default_rng(0).random((3, 32, 32))
    out, mask = inject_hazard(image, blob(magnitude=0.0), ONSET)
    assert np.array_equal(out, image)
    assert not mask.any()


def test_abrupt_blob_mean_delta():
    image = np.random.default_rng(1).random((3, 32, 32))
    out, mask = inject_hazard(image, blob(), ONSET)
    assert mask.sum() == 97
    assert (out - image)[:, mask].mean() == pytest.approx(0.4)
    assert np.array_equal(out[:, ~mask], image[:, ~mask])


def test_mask_within_changed_pixels():
    image = np.random.default_rng(2).random((3, 32, 32))
    out, mask = inject_hazard(image, blob(texture=0.75), dt.date(2019, 4, 2))
    changed = np.abs(out - image).max(axis=0) > 0
    assert np.all(changed[mask])


def test_gradual_growth_is_linear():
    hazard = blob(kind="gradual_growth", radius=12, end=ONSET + dt.timedelta(days=60))
    full = footprint_order((32, 32), hazard.center, hazard.radius).size
    image = np.zeros((1, 32, 32))
    _, mid = inject_hazard(image, hazard, ONSET + dt.timedelta(days=30))
    _, end = inject_hazard(image, hazard, ONSET + dt.timedelta(days=60))
    assert end.sum() == full
    assert abs(mid.sum() - full / 2) <= 1


def test_inactive_hazard_is_a_no_op():
    image = np.zeros((1, 32, 32))
    out, mask = inject_hazard(image, blob(), ONSET - dt.timedelta(days=1))
    assert not mask.any() and np.array_equal(out, image)


def test_textured_blob_keeps_mean_delta():
    image = np.random.default_rng(1).random((3, 32, 32))
    out, mask = inject_hazard(image, blob(texture=0.75), ONSET)
    delta = (out - image)[:, mask]
    assert mask.sum() == 97
    assert delta.mean() == pytest.approx(0.4)
    assert delta.std() > 0.25
    assert delta.min() > 0


def test_out_of_season_shows_shifted_season(tiny_scene):
    model = build_scene_model(tiny_scene, np.random.default_rng(0))
    hazard = blob(
        kind="out_of_season_shift", center=(32, 32), radius=12, magnitude=tiny_scene.seasonal_amp, shift_days=120,
    )
    date = dt.date(2019, 3, 20)
    t = day_of_year(date)
    image = expected_image(model, t)
    out, mask = inject_hazard(image, hazard, date, model)
    assert mask.sum() > 0
    assert np.allclose(out[:, mask], expected_image(model, t + 120)[:, mask])
    assert np.array_equal(out[:, ~mask], image[:, ~mask])


def test_out_of_season_offset_follows_class_phase(tiny_scene):
    model = build_scene_model(tiny_scene, np.random.default_rng(0))
    hazard = blob(kind="out_of_season_shift", center=(32, 32), radius=20, magnitude=0.6)
    date = dt.date(2019, 3, 20)
    t = day_of_year(date)
    out, mask = inject_hazard(np.zeros((3, 64, 64)), hazard, date, model)
    oracle = seasonal_term(model, t, shift=182, amp=0.6) - seasonal_term(model, t)
    assert np.allclose(out[0][mask], oracle[mask])
    if len(np.unique(model.class_map[mask])) > 1:
        assert np.ptp(out[0][mask]) > 0


def test_textured_shift_keeps_footprint_mean(tiny_scene):
    model = build_scene_model(tiny_scene, np.random.default_rng(0))
    date = dt.date(2019, 3, 20)
    plain = blob(kind="out_of_season_shift", center=(32, 32), radius=12, magnitude=0.6)
    textured = plain.model_copy(update={"texture": 0.5})
    image = np.zeros((1, 64, 64))
    flat, mask = inject_hazard(image, plain, date, model)
    rough, _ = inject_hazard(image, textured, date, model)
    assert rough[0][mask].mean() == pytest.approx(flat[0][mask].mean())
    assert np.abs(rough - flat)[0][mask].min() > 0.25


def test_out_of_season_needs_scene_model():
    with pytest.raises(SceneConfigError, match="scene model"):
        inject_hazard(np.zeros((1, 32, 32)), blob(kind="out_of_season_shift"), ONSET)


def test_hazard_field_ranges():
    with pytest.raises(ValidationError, match="shift_days"):
        blob(kind="out_of_season_shift", shift_days=365)
    with pytest.raises(ValidationError, match="texture"):
        blob(texture=1.5)


def test_footprint_out_of_bounds():
    with pytest.raises(SceneConfigError, match="leaves"):
        inject_hazard(np.zeros((1, 32, 32)), blob(center=(2, 2)), ONSET)


def test_hazard_channel_selection():
    hazard = blob().model_copy(update={"channels": [1]})
    out, mask = inject_hazard(np.zeros((3, 32, 32)), hazard, ONSET)
    assert out[0].max() == 0 and out[2].max() == 0 and out[1][mask].min() == pytest.approx(0.4)


def test_non_divisible_geometry():
    with pytest.raises(ValidationError, match="multiple of 32"):
        SceneConfig(height=100)


def test_hazard_in_training_period_rejected(tiny_scene):
    early = blob().model_copy(update={"onset_date": dt.date(2018, 1, 1)})
    with pytest.raises(SceneConfigError, match="training period"):
        generate_scene(tiny_scene.model_copy(update={"hazards": [early]}))


def test_default_scene_layout():
    config = SceneConfig()
    train, test = acquisition_dates(config)
    assert len(train) == 110 and train[0] == dt.date(2017, 1, 1)
    assert test[0].year == 2020 and test[-1] < dt.date(2021, 1, 1)
    kinds = [h.kind for h in default_hazards(2020)]
    assert kinds == ["abrupt_blob", "gradual_growth", "out_of_season_shift"]
    for h in default_hazards(2020):
        assert footprint_order((128, 128), h.center, h.radius).size > 0.01 * 128 * 128


def test_write_scene_is_ingestible(tmp_path, tiny_scene):
    scene = generate_scene(tiny_scene)
    write_scene(scene, tmp_path)
    train = load_sits_directory(tmp_path / "train", channels=3)
    assert train.dates == scene.train.dates
    assert np.array_equal(train.images[0].bands, scene.train.images[0].bands)
    labels = pd.read_csv(tmp_path / "labels.csv")
    assert list(labels.columns) == ["date", "is_hazard"]
    date = scene.test.dates[5]
    mask = read_geotiff(tmp_path / "masks" / f"mask_{date}.tif")[0]
    assert np.array_equal(mask.astype(bool), scene.masks[date])
    assert day_of_year(date) == scene.test.images[5].day_of_year


def test_rewrite_is_byte_identical(tmp_path, tiny_scene):
    write_scene(generate_scene(tiny_scene), tmp_path / "a")
    write_scene(generate_scene(tiny_scene), tmp_path / "b")
    for path in sorted((tmp_path / "a" / "train").iterdir())[:3]:
        assert path.read_bytes() == (tmp_path / "b" / "train" / path.name).read_bytes()
