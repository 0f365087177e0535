import datetime as dt
import hashlib
import json
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# === Constants ===
DEFAULT_CHANNELS = 10
PATCH_SIZE = 32
DAYS_PER_YEAR = 365
THRESHOLD_MULTIPLIER = 1.64  # one-tailed 95th percentile of a normal distribution
SEASONAL_CHANNELS = ("t_sin", "t_cos")
POSITION_CHANNELS = ("p_row", "p_col")
LINEAR_TIME_CHANNEL = "t_lin"
# Concatenation order inside every SIU-Net up-block and in the final projection.
SKIP_ORDER = ("upsampled", "encoder_residual", "encodings")
FINAL_INPUT_ORDER = ("decoder_features", "input_bands", "encodings")
REPORT_SCHEMA_VERSION = 1
AUPRC_RULE = "average_precision_stepwise_grouped_ties"


# === Helper Functions ===
def day_of_year(date: dt.date) -> int:
    """Calendar day-of-year, 1..366."""
    return date.timetuple().tm_yday


def _as_date(value):
    if isinstance(value, str):
        return dt.date.fromisoformat(value)
    if isinstance(value, dt.datetime):
        return value.date()
    return value


def _check_band_array(v: np.ndarray, name: str) -> np.ndarray:
    if not isinstance(v, np.ndarray):
        raise ValueError(f"{name} must be a numpy array, got {type(v).__name__}")
    if v.ndim != 3:
        raise ValueError(f"{name} must be C x H x W, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def _check_unit_range(v: np.ndarray, name: str) -> np.ndarray:
    if v.size and (v.min() < 0.0 or v.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1], got [{v.min():.4g}, {v.max():.4g}]")
    return v


# === Pydantic Models ===
class SitsImage(BaseModel):
    """One dated multiband observation of the region of interest."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bands: np.ndarray
    date: dt.date
    day_of_year: int | None = None
    source: str | None = None

    @model_validator(mode="before")
    @classmethod
    def fill_day_of_year(cls, data):
        if isinstance(data, dict) and data.get("day_of_year") is None and data.get("date") is not None:
            data = {**data, "day_of_year": day_of_year(_as_date(data["date"]))}
        return data

    @field_validator("bands")
    @classmethod
    def check_bands(cls, v):
        return _check_band_array(v, "bands")

    @model_validator(mode="after")
    def check_day_of_year(self):
        if self.day_of_year != day_of_year(self.date):
            raise ValueError(f"day_of_year {self.day_of_year} inconsistent with date {self.date}")
        return self

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.bands.shape)

    def with_bands(self, bands: np.ndarray) -> "SitsImage":
        return SitsImage(bands=bands, date=self.date, source=self.source)


class SitsDataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    images: list[SitsImage]
    role: Literal["train", "test"]

    @field_validator("images")
    @classmethod
    def check_images(cls, v):
        for prev, cur in zip(v, v[1:]):
            if cur.date <= prev.date:
                raise ValueError(f"dates must be strictly increasing: {prev.date} then {cur.date}")
        if v:
            shape = v[0].shape
            for img in v[1:]:
                if img.shape != shape:
                    raise ValueError(f"image {img.date} has shape {img.shape}, expected {shape}")
        return v

    def __len__(self) -> int:
        return len(self.images)

    @property
    def shape(self) -> tuple[int, int, int] | None:
        return self.images[0].shape if self.images else None

    @property
    def dates(self) -> list[dt.date]:
        return [img.date for img in self.images]

    def stack(self) -> np.ndarray:
        """All images as an N x C x H x W array."""
        return np.stack([img.bands for img in self.images])


class NormStats(BaseModel):
    """Percentile bounds used by every normalisation. Lists hold per-channel values."""

    p1: float | list[float]
    p99: float | list[float]
    channels: int

    @model_validator(mode="after")
    def check_order(self):
        lo = np.atleast_1d(np.asarray(self.p1, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.p99, dtype=np.float64))
        if lo.shape != hi.shape:
            raise ValueError("p1 and p99 must have the same length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("percentiles must be finite")
        if np.any(hi <= lo):
            raise ValueError(f"degenerate percentiles: p99 ({self.p99}) must exceed p1 ({self.p1})")
        if lo.size > 1 and lo.size != self.channels:
            raise ValueError(f"per-channel stats have {lo.size} entries for {self.channels} channels")
        return self

    @property
    def per_channel(self) -> bool:
        return isinstance(self.p1, list)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(p1, p99) broadcastable against a C x H x W array."""
        lo = np.asarray(self.p1, dtype=np.float64)
        hi = np.asarray(self.p99, dtype=np.float64)
        if self.per_channel:
            lo, hi = lo[:, None, None], hi[:, None, None]
        return lo, hi

    def digest(self) -> str:
        payload = json.dumps(self.model_dump(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class BaselineImage(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bands: np.ndarray

    @field_validator("bands")
    @classmethod
    def check_bands(cls, v):
        return _check_unit_range(_check_band_array(v, "baseline"), "baseline")

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.bands.shape)


class PatchSample(BaseModel):
    """A training unit: baseline patch, target patch and where/when it comes from."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    baseline_patch: np.ndarray
    target_patch: np.ndarray
    day_of_year: int
    row: int
    col: int
    n_rows: int
    n_cols: int
    date: dt.date | None = None

    @field_validator("baseline_patch", "target_patch")
    @classmethod
    def check_patch(cls, v, info):
        return _check_unit_range(_check_band_array(v, info.field_name), info.field_name)

    @model_validator(mode="after")
    def check_grid(self):
        if not (0 <= self.row < self.n_rows and 0 <= self.col < self.n_cols):
            raise ValueError(f"patch ({self.row}, {self.col}) outside a {self.n_rows}x{self.n_cols} grid")
        if self.baseline_patch.shape != self.target_patch.shape:
            raise ValueError("baseline and target patches differ in shape")
        return self


class EncodingVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_sin: float
    t_cos: float
    p_row: float = 0.0
    p_col: float = 0.0

    @model_validator(mode="after")
    def check_ranges(self):
        if abs(self.t_sin ** 2 + self.t_cos ** 2 - 1.0) > 1e-9:
            raise ValueError("t_sin^2 + t_cos^2 must equal 1")
        for name in POSITION_CHANNELS:
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {value}")
        return self

    def values(self) -> list[float]:
        return [self.t_sin, self.t_cos, self.p_row, self.p_col]


class AblationSwitches(BaseModel):
    """Independent switches reproducing the component ablations."""

    no_position: bool = False
    linear_time: bool = False
    mae_score: bool = False
    flat_threshold: bool = False

    def active(self) -> list[str]:
        return [name for name, on in self.model_dump().items() if on]


class ModelConfig(BaseModel):
    in_channels: int = DEFAULT_CHANNELS
    enc_channels: int = 4
    widths: tuple[int, int, int] = (32, 64, 128)
    patch: int = PATCH_SIZE

    @field_validator("in_channels")
    @classmethod
    def check_in_channels(cls, v):
        if v < 1:
            raise ValueError("in_channels must be >= 1")
        return v

    @field_validator("enc_channels")
    @classmethod
    def check_enc_channels(cls, v):
        if not 1 <= v <= 4:
            raise ValueError(f"enc_channels must be 1..4, got {v}")
        return v

    @field_validator("widths")
    @classmethod
    def check_widths(cls, v):
        if any(w < 1 for w in v):
            raise ValueError("widths must be positive")
        if any(b < a for a, b in zip(v, v[1:])):
            raise ValueError(f"widths must not decrease, got {v}")
        return v

    @field_validator("patch")
    @classmethod
    def check_patch(cls, v):
        if v < 4 or v % 4:
            raise ValueError(f"patch size must be a positive multiple of 4, got {v}")
        return v


class TrainHyperparams(BaseModel):
    epochs: int = 20
    batch_size: int = 32
    lr_init: float = 1e-4
    lr_factor: float = 0.1
    lr_patience: int = 3
    lr_min: float = 1e-7
    betas: tuple[float, float] = (0.9, 0.999)
    val_fraction: float = 0.10
    seed: int = 0
    deterministic: bool = True
    num_threads: int | None = None

    @field_validator("epochs", "batch_size", "lr_patience")
    @classmethod
    def check_positive_int(cls, v, info):
        if v <= 0:
            raise ValueError(f"{info.field_name} must be positive")
        return v

    @field_validator("lr_init", "lr_factor", "lr_min")
    @classmethod
    def check_positive_float(cls, v, info):
        if v <= 0:
            raise ValueError(f"{info.field_name} must be positive")
        return v

    @field_validator("val_fraction")
    @classmethod
    def check_val_fraction(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        return v

    @model_validator(mode="after")
    def check_lr_bounds(self):
        if self.lr_min > self.lr_init:
            raise ValueError("lr_min must not exceed lr_init")
        return self


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


class CheckpointManifest(BaseModel):
    """JSON side of a checkpoint; the weights live next to it."""

    config: ModelConfig
    encoding_order: list[str]
    skip_order: list[str] = Field(default_factory=lambda: list(SKIP_ORDER))
    final_input_order: list[str] = Field(default_factory=lambda: list(FINAL_INPUT_ORDER))
    weight_init: str = "torch-default"
    norm_stats_digest: str
    parameter_count: int
    training_history: list[EpochRecord] = Field(default_factory=list)
    seed: int
    config_hash: str | None = None
    torch_version: str | None = None


class SsimParams(BaseModel):
    window: int = 11
    gaussian_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0
    raw_k_constants: bool = False
    border: Literal["reflect", "valid_replicate"] = "reflect"

    @field_validator("window")
    @classmethod
    def check_window(cls, v):
        if v < 1 or v % 2 == 0:
            raise ValueError(f"SSIM window must be odd, got {v}")
        return v

    @field_validator("gaussian_sigma", "k1", "k2", "dynamic_range")
    @classmethod
    def check_positive(cls, v, info):
        if v <= 0:
            raise ValueError(f"{info.field_name} must be positive")
        return v

    def constants(self) -> tuple[float, float]:
        if self.raw_k_constants:
            return self.k1, self.k2
        return (self.k1 * self.dynamic_range) ** 2, (self.k2 * self.dynamic_range) ** 2


class AnomalyResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    date: dt.date
    day_of_year: int
    sdim_score: float
    heatmap: np.ndarray
    score_kind: Literal["sdim", "mae"] = "sdim"
    threshold: float | None = None
    residual: float | None = None
    flag: bool = False

    @field_validator("sdim_score")
    @classmethod
    def check_score(cls, v):
        if not math.isfinite(v):
            raise ValueError("anomaly score must be finite")
        return v

    @field_validator("heatmap")
    @classmethod
    def check_heatmap(cls, v):
        if v.ndim != 2:
            raise ValueError(f"heatmap must be H x W, got shape {v.shape}")
        return _check_unit_range(v, "heatmap")


class ThresholdModel(BaseModel):
    kind: Literal["seasonal", "flat"] = "seasonal"
    time_basis: Literal["circular", "linear"] = "circular"
    mean_coeffs: list[float] | None = None
    std_coeffs: list[float] | None = None
    multiplier: float = THRESHOLD_MULTIPLIER
    flat_value: float | None = None

    @field_validator("multiplier")
    @classmethod
    def check_multiplier(cls, v):
        if v <= 0:
            raise ValueError("multiplier must be positive")
        return v

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == "seasonal":
            n = 3 if self.time_basis == "circular" else 2
            for name in ("mean_coeffs", "std_coeffs"):
                coeffs = getattr(self, name)
                if coeffs is None or len(coeffs) != n:
                    raise ValueError(f"seasonal threshold needs {n} {name} for a {self.time_basis} basis")
        elif self.flat_value is None:
            raise ValueError("flat threshold needs flat_value")
        return self


class LabeledScore(BaseModel):
    date: dt.date
    residual: float
    flag: bool
    label: bool
    score: float | None = None
    threshold: float | None = None

    @field_validator("residual")
    @classmethod
    def check_residual(cls, v):
        if not math.isfinite(v):
            raise ValueError("residual must be finite")
        return v


class MetricsReport(BaseModel):
    precision: float
    recall: float
    f1: float
    auprc: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    n_images: int = 0
    hazard_fraction: float
    notes: list[str] = Field(default_factory=list)

    @field_validator("precision", "recall", "f1", "auprc", "hazard_fraction")
    @classmethod
    def check_unit(cls, v, info):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{info.field_name} must lie in [0, 1], got {v}")
        return v

    @model_validator(mode="after")
    def check_counts(self):
        if self.tp + self.fp + self.fn + self.tn != self.n_images:
            raise ValueError("confusion counts must sum to n_images")
        return self


class HazardSpec(BaseModel):
    """A planted hazard. Active on [onset_date, end_date]."""

    kind: Literal["abrupt_blob", "gradual_growth", "out_of_season_shift"]
    onset_date: dt.date
    end_date: dt.date
    center: tuple[int, int]
    radius: float
    magnitude: float
    channels: list[int] | None = None
    # Checkerboard amplitude relative to magnitude; zero mean over the footprint.
    texture: float = 0.0
    # out_of_season_shift: the footprint follows the seasonal cycle this many days ahead.
    shift_days: int = 182

    @field_validator("radius")
    @classmethod
    def check_radius(cls, v):
        if v <= 0:
            raise ValueError("radius must be positive")
        return v

    @field_validator("magnitude")
    @classmethod
    def check_magnitude(cls, v):
        if v < 0:
            raise ValueError("magnitude must be >= 0")
        return v

    @field_validator("texture")
    @classmethod
    def check_texture(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"texture must be in [0, 1], got {v}")
        return v

    @field_validator("shift_days")
    @classmethod
    def check_shift(cls, v):
        if not 0 < v < DAYS_PER_YEAR:
            raise ValueError(f"shift_days must be in 1..{DAYS_PER_YEAR - 1}, got {v}")
        return v

    @model_validator(mode="after")
    def check_window(self):
        if self.end_date < self.onset_date:
            raise ValueError(f"hazard ends ({self.end_date}) before its onset ({self.onset_date})")
        return self

    def is_active(self, date: dt.date) -> bool:
        return self.onset_date <= date <= self.end_date


class SceneConfig(BaseModel):
    height: int = 128
    width: int = 128
    channels: int = DEFAULT_CHANNELS
    n_land_classes: int = 5
    seasonal_amp: float = 0.1
    noise_sigma: float = 0.006
    noise_seasonal_amp: float = 0.3
    noise_peak_doy: int = 15
    cadence_days: int = 10
    years: int = 3
    test_years: int = 1
    start_year: int = 2017
    seed: int = 0
    prefix: str = "roi"
    hazards: list[HazardSpec] | None = None

    @field_validator("height", "width")
    @classmethod
    def check_geometry(cls, v, info):
        if v <= 0 or v % PATCH_SIZE:
            raise ValueError(f"{info.field_name} must be a positive multiple of {PATCH_SIZE}, got {v}")
        return v

    @field_validator("seasonal_amp", "noise_sigma")
    @classmethod
    def check_non_negative(cls, v, info):
        if v < 0:
            raise ValueError(f"{info.field_name} must be >= 0")
        return v

    @field_validator("noise_seasonal_amp")
    @classmethod
    def check_noise_amp(cls, v):
        if not 0.0 <= v < 1.0:
            raise ValueError("noise_seasonal_amp must be in [0, 1)")
        return v

    @field_validator("channels", "n_land_classes", "cadence_days", "years", "test_years")
    @classmethod
    def check_counts(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} must be >= 1")
        return v

    @property
    def test_start(self) -> dt.date:
        return dt.date(self.start_year + self.years, 1, 1)
