import numpy as np
import pandas as pd
import pytest
from matplotlib.image import imread

from shazam.models import ThresholdModel
from shazam.services import SCORE_COLUMNS, merge_scores
from shazam.tools import plot_training_scores, save_heatmap_png, save_heatmap_raster
from shazam.utils import read_geotiff


def test_heatmap_png_uses_fixed_scale(tmp_path):
    ramp = np.tile(np.linspace(0.0, 1.0, 16), (8, 1))
    save_heatmap_png(ramp, tmp_path / "a.png")
    save_heatmap_png(ramp * 0.5, tmp_path / "b.png")
    a, b = imread(tmp_path / "a.png"), imread(tmp_path / "b.png")
    assert a.shape[:2] == (8, 16)
    # no autoscaling: halving the values changes the colours
    assert not np.array_equal(a, b)
    assert np.array_equal(a[:, 0], b[:, 0])


def test_heatmap_png_is_reproducible(tmp_path):
    heat = np.random.default_rng(0).random((32, 32))
    save_heatmap_png(heat, tmp_path / "a.png")
    save_heatmap_png(heat, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_heatmap_png_rejects_stacks(tmp_path):
    with pytest.raises(ValueError):
        save_heatmap_png(np.zeros((2, 8, 8)), tmp_path / "x.png")


def test_heatmap_raster_keeps_values(tmp_path):
    heat = np.random.default_rng(1).random((32, 32))
    out = read_geotiff(save_heatmap_raster(heat, tmp_path / "h.tif"))
    assert out.shape == (1, 32, 32)
    assert np.allclose(out[0], heat.astype(np.float32))


def test_training_plot(tmp_path):
    model = ThresholdModel(kind="flat", flat_value=0.12)
    path = plot_training_scores([10, 100, 200], [0.09, 0.11, 0.1], model, tmp_path / "plot.png")
    assert path.stat().st_size > 0


def rows(dates, score):
    return pd.DataFrame([[d, score, 0.1, score - 0.1, score > 0.1] for d in dates], columns=SCORE_COLUMNS)


def test_merge_scores_replaces_rescored_dates(tmp_path):
    path = tmp_path / "scores.csv"
    merge_scores(path, rows(["2019-02-01", "2019-01-01"], 0.05))
    merged = merge_scores(path, rows(["2019-02-01", "2019-03-01"], 0.3))
    assert merged["date"].tolist() == ["2019-01-01", "2019-02-01", "2019-03-01"]
    assert merged["score"].tolist() == [0.05, 0.3, 0.3]
    assert pd.read_csv(path, dtype={"date": str})["date"].tolist() == merged["date"].tolist()
