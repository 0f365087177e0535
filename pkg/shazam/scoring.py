"""
Structural difference scoring between a generated and an observed image.

SSIM uses Gaussian-weighted local statistics computed in 64-bit with a
grouped convolution, so every channel gets its own map. The image-wise SDIM
score is the inverted, normalised mean SSIM; the SDIM map is the clamped,
squared inverse of the channel-averaged SSIM map.
"""

import logging

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ScoringError
from .models import SsimParams

logger = logging.getLogger(__name__)


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalised 2-D Gaussian kernel, size x size."""
    coords = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _check_pair(pred: np.ndarray, obs: np.ndarray, ndim: int) -> None:
    if pred.shape != obs.shape:
        raise ScoringError(f"shape mismatch: prediction {pred.shape} vs observation {obs.shape}")
    if pred.ndim != ndim:
        raise ScoringError(f"expected {ndim}-D arrays, got shape {pred.shape}")


def ssim_maps(pred: np.ndarray, obs: np.ndarray, params: SsimParams | None = None) -> np.ndarray:
    """Per-channel SSIM maps, C x H x W, same spatial shape as the inputs."""
    params = params or SsimParams()
    _check_pair(pred, obs, 3)
    channels, h, w = pred.shape
    k, pad = params.window, params.window // 2

    x = torch.as_tensor(np.asarray(pred, dtype=np.float64))[None]
    y = torch.as_tensor(np.asarray(obs, dtype=np.float64))[None]
    window = torch.as_tensor(gaussian_window(k, params.gaussian_sigma))
    window = window.expand(channels, 1, k, k).contiguous()

    if params.border == "reflect":
        if min(h, w) <= pad:
            raise ScoringError(f"image {h}x{w} too small for reflect padding of a {k}x{k} window")
        x = F.pad(x, (pad, pad, pad, pad), mode="reflect")
        y = F.pad(y, (pad, pad, pad, pad), mode="reflect")
    elif min(h, w) < k:
        raise ScoringError(f"image {h}x{w} smaller than the {k}x{k} window")

    def filt(t: torch.Tensor) -> torch.Tensor:
        return F.conv2d(t, window, groups=channels)

    mu_x, mu_y = filt(x), filt(y)
    mu_xx, mu_yy, mu_xy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
    var_x = filt(x * x) - mu_xx
    var_y = filt(y * y) - mu_yy
    cov = filt(x * y) - mu_xy

    c1, c2 = params.constants()
    ssim = ((2 * mu_xy + c1) * (2 * cov + c2)) / ((mu_xx + mu_yy + c1) * (var_x + var_y + c2))
    if params.border == "valid_replicate":
        ssim = F.pad(ssim, (pad, pad, pad, pad), mode="replicate")
    return ssim[0].clamp(-1.0, 1.0).numpy()


def ssim_map_channel(pred: np.ndarray, obs: np.ndarray, params: SsimParams | None = None) -> np.ndarray:
    """SSIM map of a single H x W channel."""
    _check_pair(pred, obs, 2)
    return ssim_maps(pred[None], obs[None], params)[0]


def sdim_from_ssim(ssim_avg: np.ndarray) -> np.ndarray:
    """clamp(1 - SSIM_avg, 0, 1) squared."""
    return np.clip(1.0 - ssim_avg, 0.0, 1.0) ** 2


def score_and_map(pred: np.ndarray, obs: np.ndarray, params: SsimParams | None = None) -> tuple[float, np.ndarray]:
    """SDIM score and SDIM map from one pass over the SSIM maps."""
    maps = ssim_maps(pred, obs, params)
    score = (1.0 - float(maps.mean())) / 2.0
    return float(np.clip(score, 0.0, 1.0)), sdim_from_ssim(maps.mean(axis=0))


def sdim_score(pred: np.ndarray, obs: np.ndarray, params: SsimParams | None = None) -> float:
    """(1 - mean SSIM over pixels and channels) / 2, in [0, 1]."""
    return score_and_map(pred, obs, params)[0]


def sdim_map(pred: np.ndarray, obs: np.ndarray, params: SsimParams | None = None) -> np.ndarray:
    """Pixel-wise hazard map in [0, 1]."""
    return score_and_map(pred, obs, params)[1]


def mae_score(pred: np.ndarray, obs: np.ndarray) -> float:
    """Mean absolute error over all pixels and channels."""
    _check_pair(pred, obs, pred.ndim)
    return float(np.mean(np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(obs, dtype=np.float64))))


def mae_map(pred: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Channel-mean absolute difference, clipped to [0, 1]."""
    _check_pair(pred, obs, 3)
    diff = np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(obs, dtype=np.float64)).mean(axis=0)
    return np.clip(diff, 0.0, 1.0)
