import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any

from dotenv import load_dotenv
from pydantic import BaseModel, field_validator, model_validator
from pydantic_settings import (
    BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict, TomlConfigSettingsSource,
)

from .models import (
    DEFAULT_CHANNELS, PATCH_SIZE, AblationSwitches, ModelConfig,
    SceneConfig, SsimParams, TrainHyperparams,
)

# Load environment variables from .env file FIRST
# so SHAZAM_* overrides are visible when RunConfig is instantiated
load_dotenv()

DEFAULT_CONFIG_PATH = Path(__file__).parent / "settings" / "default_run.toml"


class PathsConfig(BaseModel):
    data_dir: Path = Path("data")
    artifact_dir: Path = Path("artifacts")
    # Directory of rasters to monitor; defaults to <data_dir>/test
    monitor_dir: Path | None = None
    # Ground truth for evaluation; defaults to <data_dir>/labels.csv
    labels_file: Path | None = None

    @property
    def train_dir(self) -> Path:
        return self.data_dir / "train"

    @property
    def test_dir(self) -> Path:
        return self.monitor_dir or self.data_dir / "test"

    @property
    def labels_path(self) -> Path:
        return self.labels_file or self.data_dir / "labels.csv"


# --- Configuration Class using Pydantic ---
class RunConfig(BaseSettings):
    paths: PathsConfig = PathsConfig()
    channels: int = DEFAULT_CHANNELS
    # 1-based raster band indexes to read; None reads bands 1..channels
    band_order: list[int] | None = None
    patch_size: int = PATCH_SIZE
    widths: tuple[int, int, int] = (32, 64, 128)
    per_channel_norm: bool = False
    inference_batch_size: int = 1
    load_workers: int = 4
    train: TrainHyperparams = TrainHyperparams()
    ssim: SsimParams = SsimParams()
    ablation: AblationSwitches = AblationSwitches()
    scene: SceneConfig = SceneConfig()
    seed: int = 0

    model_config = SettingsConfigDict(
        env_prefix="SHAZAM_",
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8",
        toml_file=DEFAULT_CONFIG_PATH,
        extra="ignore",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        # The shipped TOML sits below the environment; field defaults below both.
        return init_settings, env_settings, dotenv_settings, TomlConfigSettingsSource(settings_cls)

    @field_validator("channels", "patch_size", "inference_batch_size", "load_workers")
    @classmethod
    def check_positive(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} must be >= 1")
        return v

    @field_validator("band_order")
    @classmethod
    def check_band_order(cls, v):
        if v is not None and any(b < 1 for b in v):
            raise ValueError("band_order uses 1-based raster band indexes")
        return v

    @model_validator(mode="after")
    def check_model_settings(self):
        self.model_settings()
        return self

    @property
    def enc_channels(self) -> int:
        time_channels = 1 if self.ablation.linear_time else 2
        return time_channels + (0 if self.ablation.no_position else 2)

    def model_settings(self) -> ModelConfig:
        return ModelConfig(
            in_channels=self.channels,
            enc_channels=self.enc_channels,
            widths=self.widths,
            patch=self.patch_size,
        )

    def seeded_train(self) -> TrainHyperparams:
        """Training hyperparameters with the run seed applied."""
        return self.train.model_copy(update={"seed": self.seed})

    def seeded_scene(self) -> SceneConfig:
        return self.scene.model_copy(update={"seed": self.seed})

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# === Loading ===
def _parse_override_value(raw: str) -> Any:
    """Parse ``raw`` as a TOML literal, falling back to a plain string."""
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_override(data: dict, assignment: str) -> dict:
    """Apply one ``dotted.key=value`` override to a nested dict in place."""
    if "=" not in assignment:
        raise ValueError(f"Override must look like key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ValueError(f"Empty override key in {assignment!r}")
    node = data
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = _parse_override_value(raw.strip())
    return data


def load_run_config(
    config_file: str | Path | None = None,
    overrides: list[str] | None = None,
    seed: int | None = None,
    ablations: dict[str, bool] | None = None,
) -> RunConfig:
    """
    Resolve a RunConfig. Precedence, highest first: explicit arguments
    (seed, ablation flags) > ``--set`` overrides > TOML file > SHAZAM_* env
    > the shipped ``default_run.toml`` > field defaults.
    """
    data: dict[str, Any] = {}
    if config_file is not None:
        path = Path(config_file)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    for assignment in overrides or []:
        apply_override(data, assignment)
    if seed is not None:
        data["seed"] = seed
    if ablations:
        section = data.setdefault("ablation", {})
        section.update({k: True for k, on in ablations.items() if on})
    return RunConfig(**data)
