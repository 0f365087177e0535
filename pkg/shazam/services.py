import datetime as dt
import json
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .config import RunConfig
from .encodings import EncodingScheme
from .errors import ArtifactError, EvaluationError, ShazamError, SitsDataError, StageError
from .evaluation import EvaluationReport, emit_report
from .models import (
    AnomalyResult, BaselineImage, CheckpointManifest, LabeledScore, NormStats, SitsDataset,
    SitsImage, ThresholdModel,
)
from .scoring import mae_map, mae_score, score_and_map
from .siu_net import (
    MANIFEST_FILE, Checkpoint, SIUNet, build_model, generate_image, load_checkpoint, save_checkpoint, train,
)
from .sits_data import (
    compute_baseline, compute_norm_stats, extract_patch_grid, load_sits_directory, load_sits_files,
    normalize, normalize_dataset, patch_grid_shape, split_indices,
)
from .synthgen import SyntheticScene, generate_scene, write_scene
from .threshold import fit_threshold, residual_and_flag, tau
from .tools import plot_training_scores, save_heatmap_png, save_heatmap_raster
from .utils import atomic_path, atomic_write_text, load_model_json, read_csv, save_model_json, write_csv

logger = logging.getLogger(__name__)

# === Artifact Layout ===
NORM_STATS_FILE = "norm_stats.json"
BASELINE_FILE = "baseline.npy"
CHECKPOINT_DIR = "checkpoint"
THRESHOLD_FILE = "threshold.json"
TRAINING_SCORES_CSV = "training_scores.csv"
TRAINING_SCORES_PNG = "training_scores.png"
SCORES_CSV = "scores.csv"
HEATMAP_DIR = "heatmaps"
SCORE_COLUMNS = ["date", "score", "threshold", "residual", "flag"]


# === Helper Functions ===
@contextmanager
def stage_errors(stage: str) -> Iterator[None]:
    """Re-raise any pipeline failure as a StageError tagged with ``stage``."""
    try:
        yield
    except StageError:
        raise
    except ShazamError as e:
        raise StageError(f"{e.stage}: {e.detail}", stage=stage) from e
    except ValidationError as e:
        raise StageError(f"invalid configuration or data: {e}", stage=stage) from e
    except OSError as e:
        raise StageError(str(e), stage=stage) from e


def write_resolved_config(config: RunConfig, stage: str, directory: Path | None = None) -> Path:
    directory = directory or config.paths.artifact_dir
    payload = {"stage": stage, "config_hash": config.config_hash(), "config": config.model_dump(mode="json")}
    return atomic_write_text(directory / f"resolved_config_{stage}.json", json.dumps(payload, indent=2, sort_keys=True))


def save_baseline(baseline: BaselineImage, path: Path) -> Path:
    with atomic_path(path) as tmp:
        with open(tmp, "wb") as fh:
            np.save(fh, baseline.bands)
    return path


def load_baseline(path: Path) -> BaselineImage:
    if not path.exists():
        raise ArtifactError(f"missing baseline {path}")
    try:
        return BaselineImage(bands=np.load(path))
    except (ValueError, ValidationError) as e:
        raise ArtifactError(f"corrupt baseline {path}: {e}")


class Artifacts(NamedTuple):
    model: SIUNet
    checkpoint: Checkpoint
    stats: NormStats
    baseline: BaselineImage
    scheme: EncodingScheme


def load_artifacts(config: RunConfig) -> Artifacts:
    """Checkpoint, stats and baseline, checked against each other and the config."""
    root = config.paths.artifact_dir
    model, checkpoint = load_checkpoint(root / CHECKPOINT_DIR)
    stats = load_model_json(NormStats, root / NORM_STATS_FILE)
    if checkpoint.manifest.norm_stats_digest != stats.digest():
        raise ArtifactError(
            f"{NORM_STATS_FILE} does not match the stats the checkpoint was trained with "
            f"({stats.digest()[:12]} vs {checkpoint.manifest.norm_stats_digest[:12]})"
        )
    baseline = load_baseline(root / BASELINE_FILE)
    if baseline.shape[0] != checkpoint.config.in_channels:
        raise ArtifactError(f"baseline has {baseline.shape[0]} channels, checkpoint {checkpoint.config.in_channels}")
    scheme = EncodingScheme.from_order(checkpoint.manifest.encoding_order)
    requested = EncodingScheme.from_ablation(config.ablation)
    if scheme.order != requested.order:
        raise ArtifactError(f"checkpoint uses encodings {scheme.order}, the configuration asks for {requested.order}")
    return Artifacts(model, checkpoint, stats, baseline, scheme)


def check_against_baseline(dataset: SitsDataset, baseline: BaselineImage) -> None:
    for img in dataset.images:
        if img.shape != baseline.shape:
            raise SitsDataError(f"{img.source or img.date} is {img.shape}, the trained baseline is {baseline.shape}")


def score_image(artifacts: Artifacts, image: SitsImage, config: RunConfig) -> tuple[float, np.ndarray]:
    """Anomaly score and heatmap of one normalised image against its generated expectation."""
    generated = generate_image(
        artifacts.model,
        artifacts.baseline,
        image.day_of_year,
        artifacts.scheme,
        batch_size=config.inference_batch_size,
    )
    if config.ablation.mae_score:
        return mae_score(generated, image.bands), mae_map(generated, image.bands)
    return score_and_map(generated, image.bands, config.ssim)


def merge_scores(path: Path, rows: pd.DataFrame) -> pd.DataFrame:
    """Replace rows for re-scored dates, keep the rest, sort by date."""
    if path.exists():
        existing = read_csv(path, dtype={"date": str})
        existing = existing[~existing["date"].isin(rows["date"])]
        rows = pd.concat([existing, rows], ignore_index=True)
    merged = rows.sort_values("date").reset_index(drop=True)[SCORE_COLUMNS]
    write_csv(merged, path)
    return merged


# === Service Classes ===
class TrainService:
    """Normalisation stats, baseline and SIU-Net weights from the training rasters"""

    @staticmethod
    def run(config: RunConfig) -> Checkpoint:
        with stage_errors("train"):
            root = config.paths.artifact_dir
            write_resolved_config(config, "train")
            raw = load_sits_directory(
                config.paths.train_dir, config.band_order,
                channels=config.channels, patch=config.patch_size, role="train", workers=config.load_workers,
            )
            stats = compute_norm_stats(raw, per_channel=config.per_channel_norm)
            data = normalize_dataset(raw, stats)

            # Split (date, row, col) keys first so held-out patches stay out of the baseline.
            n_rows, n_cols = patch_grid_shape(data.shape, config.patch_size)
            keys = [(img.date, r, c) for img in data.images for r in range(n_rows) for c in range(n_cols)]
            hp = config.seeded_train()
            train_idx, val_idx = split_indices(len(keys), hp.val_fraction, hp.seed)
            baseline = compute_baseline(data, exclude=[keys[i] for i in val_idx], patch=config.patch_size)
            samples = [s for img in data.images for s in extract_patch_grid(img, baseline, config.patch_size)]
            logger.info(
                "[TrainService.run] %d patches from %d images (%d train / %d val)",
                len(samples), len(data), len(train_idx), len(val_idx),
            )

            model = build_model(config.model_settings(), seed=config.seed)
            checkpoint = train(
                model,
                [samples[i] for i in train_idx],
                [samples[i] for i in val_idx],
                hp,
                scheme=EncodingScheme.from_ablation(config.ablation),
                norm_stats_digest=stats.digest(),
                config_hash=config.config_hash(),
            )
            save_model_json(stats, root / NORM_STATS_FILE)
            save_baseline(baseline, root / BASELINE_FILE)
            save_checkpoint(checkpoint, root / CHECKPOINT_DIR)
            return checkpoint


class CalibrateService:
    """Scores the training period and fits the hazard threshold"""

    @staticmethod
    def run(config: RunConfig) -> ThresholdModel:
        with stage_errors("calibrate"):
            root = config.paths.artifact_dir
            write_resolved_config(config, "calibrate")
            artifacts = load_artifacts(config)
            raw = load_sits_directory(
                config.paths.train_dir, config.band_order,
                channels=artifacts.checkpoint.config.in_channels, patch=config.patch_size,
                role="train", workers=config.load_workers,
            )
            check_against_baseline(raw, artifacts.baseline)

            rows = []
            for img in raw.images:
                score, _ = score_image(artifacts, normalize(img, artifacts.stats), config)
                rows.append({"date": img.date.isoformat(), "day_of_year": img.day_of_year, "score": score})
            scores = pd.DataFrame(rows, columns=["date", "day_of_year", "score"])

            threshold = fit_threshold(
                [(dt.date.fromisoformat(d), s) for d, s in zip(scores["date"], scores["score"])],
                kind="flat" if config.ablation.flat_threshold else "seasonal",
                basis="linear" if config.ablation.linear_time else "circular",
            )
            save_model_json(threshold, root / THRESHOLD_FILE)
            write_csv(scores, root / TRAINING_SCORES_CSV)
            plot_training_scores(
                scores["day_of_year"].tolist(), scores["score"].tolist(), threshold, root / TRAINING_SCORES_PNG,
                score_label="MAE score" if config.ablation.mae_score else "SDIM score",
            )
            logger.info("[CalibrateService.run] %s threshold fitted on %d training scores", threshold.kind, len(scores))
            return threshold


class MonitorService:
    """Scores new images, writes heatmaps and the score table"""

    @staticmethod
    def run(config: RunConfig, images: Sequence[str | Path] | None = None) -> list[AnomalyResult]:
        with stage_errors("monitor"):
            root = config.paths.artifact_dir
            write_resolved_config(config, "monitor")
            artifacts = load_artifacts(config)
            threshold = load_model_json(ThresholdModel, root / THRESHOLD_FILE)
            load_kwargs = dict(
                channels=artifacts.checkpoint.config.in_channels, patch=config.patch_size,
                role="test", workers=config.load_workers,
            )
            if images:
                raw = load_sits_files(images, config.band_order, **load_kwargs)
            else:
                raw = load_sits_directory(config.paths.test_dir, config.band_order, **load_kwargs)
            check_against_baseline(raw, artifacts.baseline)

            results = []
            for img in raw.images:
                score, heatmap = score_image(artifacts, normalize(img, artifacts.stats), config)
                residual, flag = residual_and_flag(score, img.day_of_year, threshold)
                level = tau(img.day_of_year, threshold)
                results.append(AnomalyResult(
                    date=img.date,
                    day_of_year=img.day_of_year,
                    sdim_score=score,
                    heatmap=heatmap,
                    score_kind="mae" if config.ablation.mae_score else "sdim",
                    threshold=level,
                    residual=residual,
                    flag=flag,
                ))
                save_heatmap_png(heatmap, root / HEATMAP_DIR / f"heatmap_{img.date}.png")
                save_heatmap_raster(heatmap, root / HEATMAP_DIR / f"heatmap_{img.date}.tif")
                if flag:
                    logger.warning("[MonitorService.run] hazard flagged on %s (residual %.4f)", img.date, residual)

            rows = pd.DataFrame(
                [[r.date.isoformat(), r.sdim_score, r.threshold, r.residual, r.flag] for r in results],
                columns=SCORE_COLUMNS,
            )
            merge_scores(root / SCORES_CSV, rows)
            logger.info(
                "[MonitorService.run] scored %d images, %d flagged", len(results), sum(r.flag for r in results),
            )
            return results


class EvaluateService:
    """Joins scores with labels and writes the detection report"""

    @staticmethod
    def run(config: RunConfig) -> EvaluationReport:
        with stage_errors("evaluate"):
            root = config.paths.artifact_dir
            write_resolved_config(config, "evaluate")
            scores = read_csv(root / SCORES_CSV, dtype={"date": str})
            labels = read_csv(config.paths.labels_path, dtype={"date": str})
            missing_cols = {"date", "is_hazard"} - set(labels.columns)
            if missing_cols:
                raise EvaluationError(f"{config.paths.labels_path} lacks columns {sorted(missing_cols)}")

            joined = scores.merge(labels[["date", "is_hazard"]], on="date", how="left")
            unmatched = joined.loc[joined["is_hazard"].isna(), "date"].tolist()
            if unmatched:
                raise EvaluationError(f"no label for scored dates: {', '.join(unmatched)}")
            unscored = sorted(set(labels["date"]) - set(scores["date"]))
            if unscored:
                logger.warning("[EvaluateService.run] %d labelled dates were never scored", len(unscored))

            results = [
                LabeledScore(
                    date=dt.date.fromisoformat(row.date),
                    residual=float(row.residual),
                    flag=bool(row.flag),
                    label=bool(int(row.is_hazard)),
                    score=float(row.score),
                    threshold=float(row.threshold),
                )
                for row in joined.itertuples(index=False)
            ]
            manifest = load_model_json(CheckpointManifest, root / CHECKPOINT_DIR / MANIFEST_FILE)
            return emit_report(
                results,
                root,
                parameter_count=manifest.parameter_count,
                ablations=config.ablation.active(),
            )


class SynthService:
    """Writes a synthetic scene into the data directory"""

    @staticmethod
    def run(config: RunConfig) -> SyntheticScene:
        with stage_errors("synth"):
            scene_config = config.seeded_scene()
            scene = generate_scene(scene_config)
            write_scene(scene, config.paths.data_dir, prefix=scene_config.prefix)
            write_resolved_config(config, "synth", config.paths.data_dir)
            return scene
