"""
Seasonal and positional conditioning values for SIU-Net.

Values are expanded into constant planes and concatenated to the image
channels. The channel order is part of checkpoint compatibility.
"""

import logging
import math
from typing import Sequence

import numpy as np
from pydantic import BaseModel

from .errors import EncodingError
from .models import (
    DAYS_PER_YEAR, LINEAR_TIME_CHANNEL, POSITION_CHANNELS, SEASONAL_CHANNELS,
    AblationSwitches, EncodingVector,
)

logger = logging.getLogger(__name__)


def encoding_day(day_of_year: int) -> int:
    """Map a calendar day-of-year (1..366) onto the 365-day encoding cycle."""
    if not 1 <= day_of_year <= DAYS_PER_YEAR + 1:
        raise EncodingError(f"day of year {day_of_year} outside 1..366")
    if day_of_year == DAYS_PER_YEAR + 1:
        logger.debug("[encodings.encoding_day] leap day 366 mapped to 365")
        return DAYS_PER_YEAR
    return day_of_year


def cyclical(t: float | np.ndarray) -> tuple:
    """(sin, cos) of 2*pi*t/365 for any real t, scalar or array."""
    angle = 2.0 * np.pi * np.asarray(t, dtype=np.float64) / DAYS_PER_YEAR
    s, c = np.sin(angle), np.cos(angle)
    if s.ndim == 0:
        return float(s), float(c)
    return s, c


def seasonal_encoding(day_of_year: int) -> tuple[float, float]:
    """Cyclical day-of-year encoding (t_sin, t_cos) for 1 <= t <= 365."""
    if not 1 <= day_of_year <= DAYS_PER_YEAR:
        raise EncodingError(f"day of year {day_of_year} outside 1..{DAYS_PER_YEAR}")
    angle = 2.0 * math.pi * day_of_year / DAYS_PER_YEAR
    return math.sin(angle), math.cos(angle)


def linear_time_encoding(day_of_year: int) -> float:
    """Normalised day-of-year, 0 on January 1st and 1 on December 31st."""
    if not 1 <= day_of_year <= DAYS_PER_YEAR:
        raise EncodingError(f"day of year {day_of_year} outside 1..{DAYS_PER_YEAR}")
    return (day_of_year - 1) / (DAYS_PER_YEAR - 1)


def positional_encoding(row: int, col: int, n_patches: int, n_patches_col: int | None = None) -> tuple[float, float]:
    """Normalised patch-grid coordinates (row / n, col / n)."""
    n_cols = n_patches if n_patches_col is None else n_patches_col
    if n_patches < 1 or n_cols < 1:
        raise EncodingError("patch grid must have at least one patch per dimension")
    if not (0 <= row < n_patches and 0 <= col < n_cols):
        raise EncodingError(f"patch ({row}, {col}) outside a {n_patches}x{n_cols} grid")
    return row / n_patches, col / n_cols


def encoding_channels(vec: EncodingVector | Sequence[float], spatial: int) -> np.ndarray:
    """Expand encoding values to a K x spatial x spatial stack of constant planes."""
    values = vec.values() if isinstance(vec, EncodingVector) else list(vec)
    arr = np.asarray(values, dtype=np.float32)
    return np.broadcast_to(arr[:, None, None], (arr.size, spatial, spatial)).copy()


class EncodingScheme(BaseModel):
    """Which conditioning channels are active; reflects the ablation switches."""

    linear_time: bool = False
    use_position: bool = True

    @classmethod
    def from_ablation(cls, ablation: AblationSwitches) -> "EncodingScheme":
        return cls(linear_time=ablation.linear_time, use_position=not ablation.no_position)

    @classmethod
    def from_order(cls, order: Sequence[str]) -> "EncodingScheme":
        scheme = cls(linear_time=LINEAR_TIME_CHANNEL in order, use_position=POSITION_CHANNELS[0] in order)
        if scheme.order != list(order):
            raise EncodingError(f"unknown encoding order {list(order)}")
        return scheme

    @property
    def order(self) -> list[str]:
        time_channels = [LINEAR_TIME_CHANNEL] if self.linear_time else list(SEASONAL_CHANNELS)
        return time_channels + (list(POSITION_CHANNELS) if self.use_position else [])

    @property
    def n_channels(self) -> int:
        return len(self.order)

    def values(self, day_of_year: int, row: int, col: int, n_rows: int, n_cols: int) -> np.ndarray:
        """Encoding values for one patch, in ``order``."""
        t = encoding_day(day_of_year)
        if self.linear_time:
            out = [linear_time_encoding(t)]
        else:
            out = list(seasonal_encoding(t))
        if self.use_position:
            out.extend(positional_encoding(row, col, n_rows, n_cols))
        return np.asarray(out, dtype=np.float32)
