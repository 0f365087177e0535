import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, TypeVar

import numpy as np
import pandas as pd
import rasterio
from pydantic import BaseModel, ValidationError
from rasterio.transform import from_origin

from .errors import ArtifactError

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | int = "INFO") -> None:
    """Install a single stream handler on the package logger."""
    root = logging.getLogger("shazam")
    root.setLevel(level if isinstance(level, int) else level.upper())
    if not any(getattr(h, "_shazam", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._shazam = True
        root.addHandler(handler)


# --- Persistence Functions ---
@contextmanager
def atomic_path(path: str | Path, suffix: str | None = None) -> Iterator[Path]:
    """
    Yield a temporary path next to ``path``; on success it replaces ``path``.
    Writers that infer the format from the extension get the real suffix.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(
        dir=target.parent,
        prefix=f".{target.name}.",
        suffix=suffix if suffix is not None else target.suffix,
    )
    os.close(fd)
    tmp_path = Path(tmp)
    try:
        yield tmp_path
        os.replace(tmp_path, target)
    finally:
        if tmp_path.exists():
            tmp_path.unlink()


def atomic_write_text(path: str | Path, text: str) -> Path:
    with atomic_path(path) as tmp:
        tmp.write_text(text, encoding="utf-8")
    return Path(path)


def save_model_json(model: BaseModel, path: str | Path) -> Path:
    """Persist a pydantic model as indented JSON."""
    saved = atomic_write_text(path, model.model_dump_json(indent=2))
    logger.debug("[utils.save_model_json] wrote %s", saved)
    return saved


def load_model_json(cls: type[M], path: str | Path) -> M:
    """Load a pydantic model from JSON, mapping every failure to ArtifactError."""
    path = Path(path)
    try:
        return cls.model_validate_json(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ArtifactError(f"missing artifact {path}")
    except ValidationError as e:
        raise ArtifactError(f"corrupt artifact {path}: {e}")


def write_csv(df: pd.DataFrame, path: str | Path) -> Path:
    with atomic_path(path) as tmp:
        df.to_csv(tmp, index=False, float_format="%.10g", lineterminator="\n")
    return Path(path)


def read_csv(path: str | Path, **kwargs) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing table {path}")
    return pd.read_csv(path, **kwargs)


# --- Raster Functions ---
DEFAULT_CRS = "EPSG:32755"
PIXEL_SIZE_M = 10.0


def write_geotiff(
    path: str | Path,
    array: np.ndarray,
    dtype: str = "float32",
    crs: str | None = DEFAULT_CRS,
    transform=None,
) -> Path:
    """Write an H x W or C x H x W array as an uncompressed GTiff."""
    bands = array[None] if array.ndim == 2 else array
    count, height, width = bands.shape
    profile = {
        "driver": "GTiff",
        "height": height,
        "width": width,
        "count": count,
        "dtype": dtype,
        "crs": crs,
        "transform": transform or from_origin(0.0, height * PIXEL_SIZE_M, PIXEL_SIZE_M, PIXEL_SIZE_M),
    }
    with atomic_path(path) as tmp:
        with rasterio.open(tmp, "w", **profile) as dst:
            dst.write(bands.astype(dtype))
    return Path(path)


def read_geotiff(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing raster {path}")
    with rasterio.open(path) as src:
        return src.read()
