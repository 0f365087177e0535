import numpy as np
import pytest
from scipy.stats import spearmanr

from shazam.errors import ScoringError
from shazam.models import SsimParams
from shazam.scoring import (
    gaussian_window, mae_map, mae_score, sdim_from_ssim, sdim_map, sdim_score, ssim_map_channel, ssim_maps,
)

PARAMS = SsimParams()


def naive_ssim(x: np.ndarray, y: np.ndarray, params: SsimParams = PARAMS) -> np.ndarray:
    """Direct evaluation of windowed SSIM over explicit reflect-padded windows."""
    k, pad = params.window, params.window // 2
    w = gaussian_window(k, params.gaussian_sigma)
    xp = np.pad(x.astype(np.float64), pad, mode="reflect")
    yp = np.pad(y.astype(np.float64), pad, mode="reflect")
    c1, c2 = params.constants()
    out = np.empty(x.shape, dtype=np.float64)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            wx, wy = xp[i:i + k, j:j + k], yp[i:i + k, j:j + k]
            mx, my = (w * wx).sum(), (w * wy).sum()
            vx = (w * (wx - mx) ** 2).sum()
            vy = (w * (wy - my) ** 2).sum()
            cov = (w * (wx - mx) * (wy - my)).sum()
            out[i, j] = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))
    return out


def test_matches_naive_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, y = rng.random((32, 32)), rng.random((32, 32))
        assert np.max(np.abs(ssim_map_channel(x, y) - naive_ssim(x, y))) < 1e-6


def test_identical_images():
    x = np.random.default_rng(1).random((3, 32, 32))
    assert np.allclose(ssim_maps(x, x), 1.0, atol=1e-7)
    assert sdim_score(x, x) == pytest.approx(0.0, abs=1e-7)
    assert np.allclose(sdim_map(x, x), 0.0, atol=1e-12)


def test_inverted_checkerboard_is_anticorrelated():
    board = (np.indices((32, 32)).sum(axis=0) % 2).astype(np.float64)
    assert ssim_map_channel(1.0 - board, board).mean() < 0


def test_score_composes_channel_maps():
    rng = np.random.default_rng(2)
    x, y = rng.random((3, 32, 32)), rng.random((3, 32, 32))
    oracle = np.stack([naive_ssim(x[c], y[c]) for c in range(3)])
    assert sdim_score(x, y) == pytest.approx((1 - oracle.mean()) / 2, abs=1e-6)
    assert np.allclose(sdim_map(x, y), np.clip(1 - oracle.mean(axis=0), 0, 1) ** 2, atol=1e-6)


def test_sdim_map_clamp_and_square():
    assert sdim_from_ssim(np.array([-0.2]))[0] == 1.0
    assert sdim_from_ssim(np.array([0.5]))[0] == 0.25
    assert sdim_from_ssim(np.array([1.0]))[0] == 0.0


def test_symmetry():
    rng = np.random.default_rng(3)
    x, y = rng.random((2, 32, 32)), rng.random((2, 32, 32))
    assert np.allclose(ssim_maps(x, y), ssim_maps(y, x), atol=1e-9)


def test_ranges_on_random_pairs():
    rng = np.random.default_rng(4)
    for _ in range(100):
        x, y = rng.random((2, 32, 32)), rng.random((2, 32, 32))
        score, heat = sdim_score(x, y), sdim_map(x, y)
        assert 0.0 <= score <= 1.0
        assert np.all(np.isfinite(heat)) and heat.min() >= 0.0 and heat.max() <= 1.0


def test_monotone_under_growing_corruption():
    fractions = np.linspace(0.0, 1.0, 6)
    rhos = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        obs = np.clip(rng.normal(0.5, 0.05, (2, 32, 32)) + np.linspace(0, 0.3, 32), 0, 1)
        noise = rng.random(obs.shape)
        order = rng.permutation(obs.size)
        scores = []
        for f in fractions:
            corrupted = obs.copy().ravel()
            idx = order[: int(f * obs.size)]
            corrupted[idx] = noise.ravel()[idx]
            scores.append(sdim_score(obs, corrupted.reshape(obs.shape)))
        rhos.append(spearmanr(fractions, scores).correlation)
    assert np.mean(rhos) > 0.9


@pytest.mark.parametrize("border", ["reflect", "valid_replicate"])
@pytest.mark.parametrize("window", [3, 7, 11])
def test_map_shape_equals_input(border, window):
    params = SsimParams(window=window, border=border)
    x = np.random.default_rng(5).random((2, 32, 32))
    assert ssim_maps(x, x[::-1].copy(), params).shape == (2, 32, 32)


def test_raw_constants_change_the_map():
    rng = np.random.default_rng(6)
    x, y = rng.random((1, 32, 32)), rng.random((1, 32, 32))
    raw = SsimParams(raw_k_constants=True)
    assert not np.allclose(ssim_maps(x, y), ssim_maps(x, y, raw))


def test_rejects_bad_shapes():
    with pytest.raises(ScoringError, match="shape mismatch"):
        sdim_score(np.zeros((2, 32, 32)), np.zeros((2, 32, 16)))
    with pytest.raises(ScoringError, match="too small"):
        sdim_score(np.zeros((1, 4, 4)), np.zeros((1, 4, 4)))


def test_mae():
    rng = np.random.default_rng(7)
    x = rng.random((3, 16, 16)) * 0.8
    assert mae_score(x, x) == 0.0
    assert mae_score(x + 0.1, x) == pytest.approx(0.1, abs=1e-12)
    y = rng.random((3, 16, 16))
    total = 0.0
    for v in np.abs(x - y).ravel():
        total += v
    assert mae_score(x, y) == pytest.approx(total / x.size, abs=1e-9)
    heat = mae_map(x, y)
    assert heat.shape == (16, 16)
    assert np.allclose(heat, np.abs(x - y).mean(axis=0))
