"""
Seasonal hazard threshold.

Two circular regressions over the training-period anomaly scores, one for
their mean and one for their monthly standard deviation, give

    tau(t) = m(t) + 1.64 * s(t)

Scores above tau(t) are potential hazards. The flat variant replaces both
regressions with the overall mean and standard deviation.
"""

import datetime as dt
import logging
from typing import Literal, Sequence

import numpy as np
import pandas as pd

from .encodings import cyclical
from .errors import ThresholdFitError
from .models import DAYS_PER_YEAR, THRESHOLD_MULTIPLIER, ThresholdModel, day_of_year

logger = logging.getLogger(__name__)

TimeBasis = Literal["circular", "linear"]

MIN_MONTHS = 3
MIN_SCORES_PER_MONTH = 2
MID_MONTH_DAY = 15
# Mid-month anchors are taken from a non-leap year.
_ANCHOR_YEAR = 2019


def mid_month_day(month: int) -> int:
    return day_of_year(dt.date(_ANCHOR_YEAR, month, MID_MONTH_DAY))


def design_matrix(days: Sequence[float] | np.ndarray, basis: TimeBasis = "circular") -> np.ndarray:
    """Rows of (sin, cos, 1) for the circular basis, (t_lin, 1) for the linear one."""
    t = np.atleast_1d(np.asarray(days, dtype=np.float64))
    ones = np.ones_like(t)
    if basis == "circular":
        s, c = cyclical(t)
        return np.column_stack([s, c, ones])
    return np.column_stack([(t - 1.0) / (DAYS_PER_YEAR - 1), ones])


def _least_squares(days: Sequence[float], values: Sequence[float], basis: TimeBasis, what: str) -> tuple[float, ...]:
    X = design_matrix(days, basis)
    y = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ThresholdFitError(f"{what} regression got non-finite values")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        n_days = len(np.unique(np.asarray(days)))
        raise ThresholdFitError(
            f"{what} regression is rank-deficient: {n_days} distinct day(s) for {X.shape[1]} coefficients"
        )
    coeffs, *_ = np.linalg.lstsq(X, y, rcond=None)
    return tuple(float(c) for c in coeffs)


def fit_mean_regression(scores: Sequence[tuple[int, float]], basis: TimeBasis = "circular") -> tuple[float, ...]:
    """Least-squares fit of score against the time basis; each image weighs the same."""
    if not scores:
        raise ThresholdFitError("no scores to fit the mean regression")
    days, values = zip(*scores)
    return _least_squares(days, values, basis, "mean")


def monthly_std(scores: Sequence[tuple[dt.date, float]]) -> pd.DataFrame:
    """
    Sample standard deviation (n - 1) of the scores per calendar month, pooled
    across years. Months with fewer than two scores are dropped.
    """
    df = pd.DataFrame(list(scores), columns=["date", "score"])
    df["month"] = pd.to_datetime(df["date"]).dt.month
    stats = df.groupby("month")["score"].agg(["count", "std"]).reset_index()
    skipped = stats.loc[stats["count"] < MIN_SCORES_PER_MONTH, "month"].tolist()
    if skipped:
        logger.info("[threshold.monthly_std] skipping months with a single score: %s", skipped)
    stats = stats[stats["count"] >= MIN_SCORES_PER_MONTH].copy()
    stats["day_of_year"] = stats["month"].map(mid_month_day)
    return stats[["month", "day_of_year", "count", "std"]]


def fit_std_regression(scores: Sequence[tuple[dt.date, float]], basis: TimeBasis = "circular") -> tuple[float, ...]:
    """Regression of the monthly standard deviations placed at mid-month."""
    if not scores:
        raise ThresholdFitError("no scores to fit the std regression")
    stats = monthly_std(scores)
    if len(stats) < MIN_MONTHS:
        raise ThresholdFitError(
            f"std regression needs {MIN_MONTHS} months with >= {MIN_SCORES_PER_MONTH} scores, got {len(stats)}"
        )
    return _least_squares(stats["day_of_year"].tolist(), stats["std"].tolist(), basis, "std")


def fit_flat_threshold(scores: Sequence[float], multiplier: float = THRESHOLD_MULTIPLIER) -> ThresholdModel:
    values = np.asarray(scores, dtype=np.float64)
    if values.size < 2:
        raise ThresholdFitError(f"flat threshold needs at least 2 scores, got {values.size}")
    flat = float(values.mean() + multiplier * values.std(ddof=1))
    return ThresholdModel(kind="flat", multiplier=multiplier, flat_value=flat)


def fit_threshold(
    dated_scores: Sequence[tuple[dt.date, float]],
    kind: Literal["seasonal", "flat"] = "seasonal",
    basis: TimeBasis = "circular",
    multiplier: float = THRESHOLD_MULTIPLIER,
) -> ThresholdModel:
    """Fit a ThresholdModel from (date, score) pairs of the training period."""
    if kind == "flat":
        return fit_flat_threshold([s for _, s in dated_scores], multiplier)
    mean_coeffs = fit_mean_regression([(day_of_year(d), s) for d, s in dated_scores], basis)
    std_coeffs = fit_std_regression(dated_scores, basis)
    model = ThresholdModel(
        kind="seasonal",
        time_basis=basis,
        mean_coeffs=list(mean_coeffs),
        std_coeffs=list(std_coeffs),
        multiplier=multiplier,
    )
    logger.info("[threshold.fit] mean %s, std %s (%s basis)", model.mean_coeffs, model.std_coeffs, basis)
    return model


def tau(t: float | np.ndarray, model: ThresholdModel) -> float | np.ndarray:
    """Threshold at day-of-year ``t``; scalar in, scalar out."""
    t_arr = np.asarray(t, dtype=np.float64)
    if model.kind == "flat":
        out = np.full(t_arr.shape, model.flat_value, dtype=np.float64)
    else:
        X = design_matrix(t_arr.ravel(), model.time_basis)
        mean = X @ np.asarray(model.mean_coeffs)
        std = X @ np.asarray(model.std_coeffs)
        out = (mean + model.multiplier * std).reshape(t_arr.shape)
    return float(out) if out.ndim == 0 else out


def residual_and_flag(score: float, t: int, model: ThresholdModel) -> tuple[float, bool]:
    """Residual score - tau(t); flagged when strictly positive."""
    residual = float(score) - tau(t, model)
    return residual, residual > 0.0
