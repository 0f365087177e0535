"""
SIU-Net: a small conditional UNet translating a baseline patch into its
expected appearance for a given day of year (and patch position).

Conditioning values enter as constant planes: concatenated to the input, to
every up-block's skip concatenation and to the final 1x1 projection.
"""

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict
from torch.optim.lr_scheduler import ReduceLROnPlateau
from torch.utils.data import DataLoader, Dataset

from .encodings import EncodingScheme
from .errors import ArtifactError, ModelError, SitsDataError, TrainingError
from .models import (
    BaselineImage, CheckpointManifest, EncodingVector, EpochRecord, ModelConfig,
    PatchSample, TrainHyperparams,
)
from .sits_data import patch_grid_shape, stitch_patches
from .utils import atomic_path, load_model_json, save_model_json

logger = logging.getLogger(__name__)

WEIGHTS_FILE = "weights.pt"
MANIFEST_FILE = "manifest.json"
PROBE_FILE = "probe.npz"
PROBE_SEED = 1234


# === Network ===
class DoubleConv(nn.Module):
    """(3x3 conv, GELU) twice, stride 1, padding 1."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=1, padding=1),
            nn.GELU(),
            nn.Conv2d(out_channels, out_channels, kernel_size=3, stride=1, padding=1),
            nn.GELU(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.block(x)


class Down(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.pool = nn.MaxPool2d(kernel_size=2, stride=2)
        self.conv = DoubleConv(in_channels, out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(self.pool(x))


class Up(nn.Module):
    """Bilinear 2x upsample, concatenate [upsampled | encoder residual | encodings], double conv."""

    def __init__(self, in_channels: int, skip_channels: int, enc_channels: int, out_channels: int):
        super().__init__()
        self.up = nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False)
        self.conv = DoubleConv(in_channels + skip_channels + enc_channels, out_channels)

    def forward(self, x: torch.Tensor, skip: torch.Tensor, enc: torch.Tensor) -> torch.Tensor:
        x = self.up(x)
        return self.conv(torch.cat([x, skip, expand_encodings(enc, x)], dim=1))


def expand_encodings(enc: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    """B x K values to B x K x H x W constant planes matching ``like``."""
    return enc[:, :, None, None].expand(-1, -1, like.shape[-2], like.shape[-1])


class SIUNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c, k = config.in_channels, config.enc_channels
        w1, w2, w3 = config.widths
        self.inc = DoubleConv(c + k, w1)
        self.down1 = Down(w1, w2)
        self.down2 = Down(w2, w3)
        self.up1 = Up(w3, w2, k, w2)
        self.up2 = Up(w2, w1, k, w1)
        self.out = nn.Conv2d(w1 + c + k, c, kernel_size=1, stride=1)

    def forward(self, x: torch.Tensor, enc: torch.Tensor) -> torch.Tensor:
        inp = torch.cat([x, expand_encodings(enc, x)], dim=1)
        x1 = self.inc(inp)
        x2 = self.down1(x1)
        x3 = self.down2(x2)
        u = self.up1(x3, x2, enc)
        u = self.up2(u, x1, enc)
        return self.out(torch.cat([u, inp], dim=1))


def build_model(config: ModelConfig, seed: int | None = None) -> SIUNet:
    """Construct SIU-Net with the toolchain's default initialisation; ``seed`` fixes it."""
    if seed is not None:
        torch.manual_seed(seed)
    model = SIUNet(config)
    logger.debug("[siu_net.build_model] %s -> %d parameters", config.widths, count_parameters(model))
    return model


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def _model_dtype(model: nn.Module) -> torch.dtype:
    return next(model.parameters()).dtype


def _encoding_array(enc: EncodingVector | Sequence[float]) -> np.ndarray:
    values = enc.values() if isinstance(enc, EncodingVector) else list(enc)
    return np.asarray(values, dtype=np.float64)


def forward(model: SIUNet, baseline_patch: np.ndarray, enc: EncodingVector | Sequence[float]) -> np.ndarray:
    """Evaluation-mode prediction for one C x p x p patch."""
    config = model.config
    values = _encoding_array(enc)
    if baseline_patch.ndim != 3 or baseline_patch.shape[0] != config.in_channels:
        raise ModelError(f"patch shape {baseline_patch.shape} does not match {config.in_channels} input channels")
    if baseline_patch.shape[1] % 4 or baseline_patch.shape[2] % 4:
        raise ModelError(f"patch spatial size {baseline_patch.shape[1:]} must be divisible by 4")
    if values.size != config.enc_channels:
        raise ModelError(f"{values.size} encoding values for a model expecting {config.enc_channels}")
    return predict_batch(model, baseline_patch[None], values[None])[0]


def predict_batch(model: SIUNet, patches: np.ndarray, encodings: np.ndarray) -> np.ndarray:
    dtype = _model_dtype(model)
    model.eval()
    with torch.no_grad():
        x = torch.as_tensor(np.ascontiguousarray(patches), dtype=dtype)
        e = torch.as_tensor(np.ascontiguousarray(encodings), dtype=dtype)
        out = model(x, e)
    return out.numpy()


# === Data ===
class PatchDataset(Dataset):
    """Stacked baseline/target patches with their encoding vectors."""

    def __init__(self, samples: Sequence[PatchSample], scheme: EncodingScheme):
        if not samples:
            raise ModelError("empty patch dataset")
        self.inputs = torch.from_numpy(np.stack([s.baseline_patch for s in samples]).astype(np.float32))
        self.targets = torch.from_numpy(np.stack([s.target_patch for s in samples]).astype(np.float32))
        self.encodings = torch.from_numpy(np.stack([
            scheme.values(s.day_of_year, s.row, s.col, s.n_rows, s.n_cols) for s in samples
        ]).astype(np.float32))

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def __getitem__(self, idx):
        return self.inputs[idx], self.encodings[idx], self.targets[idx]


# === Checkpoint ===
class Checkpoint(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: dict[str, torch.Tensor]
    manifest: CheckpointManifest

    @property
    def config(self) -> ModelConfig:
        return self.manifest.config

    @property
    def training_history(self) -> list[EpochRecord]:
        return self.manifest.training_history


def make_scheduler(optimizer: torch.optim.Optimizer, hp: TrainHyperparams) -> ReduceLROnPlateau:
    # torch reduces once bad epochs exceed ``patience``; the plateau length is
    # the number of non-improving epochs that triggers the drop.
    return ReduceLROnPlateau(
        optimizer,
        mode="min",
        factor=hp.lr_factor,
        patience=hp.lr_patience - 1,
        threshold=0.0,
        threshold_mode="abs",
        min_lr=hp.lr_min,
    )


def configure_determinism(hp: TrainHyperparams) -> None:
    torch.manual_seed(hp.seed)
    if hp.num_threads:
        torch.set_num_threads(hp.num_threads)
    torch.use_deterministic_algorithms(hp.deterministic)


def _evaluate_l1(model: SIUNet, loader: DataLoader) -> float:
    """Per-pixel mean absolute error over a whole loader."""
    dtype = _model_dtype(model)
    total, count = 0.0, 0
    model.eval()
    with torch.no_grad():
        for x, e, y in loader:
            pred = model(x.to(dtype), e.to(dtype))
            total += torch.abs(pred - y.to(dtype)).sum().item()
            count += y.numel()
    return total / count


def train(
    model: SIUNet,
    train_samples: Sequence[PatchSample],
    val_samples: Sequence[PatchSample],
    hp: TrainHyperparams,
    scheme: EncodingScheme | None = None,
    norm_stats_digest: str = "",
    config_hash: str | None = None,
) -> Checkpoint:
    """
    Self-supervised L1 training: baseline patch + encodings -> target patch.
    The learning rate drops by ``lr_factor`` when validation L1 plateaus.
    """
    if not train_samples or not val_samples:
        raise ModelError("training needs non-empty train and validation sets")
    scheme = scheme or EncodingScheme()
    if scheme.n_channels != model.config.enc_channels:
        raise ModelError(
            f"encoding scheme has {scheme.n_channels} channels, model expects {model.config.enc_channels}"
        )
    configure_determinism(hp)
    dtype = _model_dtype(model)

    train_loader = DataLoader(
        PatchDataset(train_samples, scheme),
        batch_size=hp.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(hp.seed),
    )
    val_loader = DataLoader(PatchDataset(val_samples, scheme), batch_size=hp.batch_size, shuffle=False)

    optimizer = torch.optim.Adam(model.parameters(), lr=hp.lr_init, betas=hp.betas)
    scheduler = make_scheduler(optimizer, hp)
    loss_fn = nn.L1Loss()
    history: list[EpochRecord] = []

    for epoch in range(hp.epochs):
        lr = optimizer.param_groups[0]["lr"]
        model.train()
        running, seen = 0.0, 0
        for batch_index, (x, e, y) in enumerate(train_loader):
            optimizer.zero_grad()
            loss = loss_fn(model(x.to(dtype), e.to(dtype)), y.to(dtype))
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite training loss at epoch {epoch}, batch {batch_index}",
                    batch_index=batch_index,
                    epoch=epoch,
                )
            loss.backward()
            optimizer.step()
            running += loss.item() * x.shape[0]
            seen += x.shape[0]
        val_loss = _evaluate_l1(model, val_loader)
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}", epoch=epoch)
        scheduler.step(val_loss)
        record = EpochRecord(epoch=epoch, train_loss=running / seen, val_loss=val_loss, lr=lr)
        history.append(record)
        logger.info(
            "[siu_net.train] epoch %d/%d train_l1=%.5f val_l1=%.5f lr=%.1e",
            epoch + 1, hp.epochs, record.train_loss, record.val_loss, lr,
        )

    manifest = CheckpointManifest(
        config=model.config,
        encoding_order=scheme.order,
        norm_stats_digest=norm_stats_digest,
        parameter_count=count_parameters(model),
        training_history=history,
        seed=hp.seed,
        config_hash=config_hash,
        torch_version=torch.__version__,
    )
    weights = {k: v.detach().clone() for k, v in model.state_dict().items()}
    return Checkpoint(weights=weights, manifest=manifest)


# === Persistence ===
def _probe_inputs(config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(PROBE_SEED)
    patch = rng.random((config.in_channels, config.patch, config.patch), dtype=np.float32)
    enc = rng.random(config.enc_channels).astype(np.float32)
    return patch, enc


def model_from_checkpoint(checkpoint: Checkpoint) -> SIUNet:
    model = SIUNet(checkpoint.config)
    model.load_state_dict(checkpoint.weights)
    model.eval()
    return model


def save_checkpoint(checkpoint: Checkpoint, directory: str | Path) -> Path:
    """Weights blob, JSON manifest and a probe input/output pair for reload checks."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with atomic_path(directory / WEIGHTS_FILE) as tmp:
        torch.save(checkpoint.weights, tmp)
    patch, enc = _probe_inputs(checkpoint.config)
    expected = forward(model_from_checkpoint(checkpoint), patch, enc)
    with atomic_path(directory / PROBE_FILE) as tmp:
        with open(tmp, "wb") as fh:
            np.savez(fh, patch=patch, enc=enc, output=expected)
    save_model_json(checkpoint.manifest, directory / MANIFEST_FILE)
    logger.info("[siu_net.save_checkpoint] checkpoint written to %s", directory)
    return directory


def load_checkpoint(directory: str | Path) -> tuple[SIUNet, Checkpoint]:
    """Reload a checkpoint and verify it reproduces its probe output bit for bit."""
    directory = Path(directory)
    manifest = load_model_json(CheckpointManifest, directory / MANIFEST_FILE)
    weights_path = directory / WEIGHTS_FILE
    if not weights_path.exists():
        raise ArtifactError(f"missing weights {weights_path}")
    weights = torch.load(weights_path, map_location="cpu", weights_only=True)
    checkpoint = Checkpoint(weights=weights, manifest=manifest)
    try:
        model = model_from_checkpoint(checkpoint)
    except RuntimeError as e:
        raise ArtifactError(f"weights in {directory} do not match the manifest config: {e}")

    probe_path = directory / PROBE_FILE
    if probe_path.exists():
        with np.load(probe_path) as probe:
            output = forward(model, probe["patch"], probe["enc"])
            if not np.array_equal(output, probe["output"]):
                raise ArtifactError(f"checkpoint {directory} does not reproduce its probe output")
    else:
        logger.warning("[siu_net.load_checkpoint] no probe stored in %s; skipping reload check", directory)
    return model, checkpoint


# === Inference ===
def generate_image(
    model: SIUNet,
    baseline: BaselineImage,
    day_of_year: int,
    scheme: EncodingScheme | None = None,
    batch_size: int = 1,
) -> np.ndarray:
    """Expected C x H x W image for ``day_of_year``: forward every baseline patch, stitch row-major."""
    config = model.config
    scheme = scheme or EncodingScheme()
    c = baseline.shape[0]
    if c != config.in_channels:
        raise ModelError(f"baseline has {c} channels, checkpoint expects {config.in_channels}")
    if scheme.n_channels != config.enc_channels:
        raise ModelError(f"encoding scheme has {scheme.n_channels} channels, model expects {config.enc_channels}")
    p = config.patch
    try:
        n_rows, n_cols = patch_grid_shape(baseline.shape, p)
    except SitsDataError as e:
        raise ModelError(e.detail)

    patches, encodings = [], []
    for r in range(n_rows):
        for col in range(n_cols):
            patches.append(baseline.bands[:, r * p:(r + 1) * p, col * p:(col + 1) * p])
            encodings.append(scheme.values(day_of_year, r, col, n_rows, n_cols))
    patches_arr = np.stack(patches)
    enc_arr = np.stack(encodings)

    outputs = []
    for start in range(0, len(patches_arr), batch_size):
        outputs.append(predict_batch(model, patches_arr[start:start + batch_size], enc_arr[start:start + batch_size]))
    return stitch_patches(np.concatenate(outputs), n_rows, n_cols)
