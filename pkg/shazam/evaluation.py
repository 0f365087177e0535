"""
Detection metrics and reports.

Image-level precision, recall and F1 come from the binary flags; AUPRC ranks
the residuals (score minus threshold) with the step-wise average-precision
rule, grouping tied residuals into one operating point.
"""

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from sklearn.metrics import (
    average_precision_score, confusion_matrix, precision_recall_curve, precision_recall_fscore_support,
)

from .errors import EvaluationError
from .models import AUPRC_RULE, REPORT_SCHEMA_VERSION, LabeledScore, MetricsReport
from .utils import atomic_write_text, save_model_json, write_csv

logger = logging.getLogger(__name__)

REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"
PR_CURVE_CSV = "pr_curve.csv"
RANDOM_RECALL = 0.5


class EvaluationReport(BaseModel):
    schema_version: int = REPORT_SCHEMA_VERSION
    auprc_rule: str = AUPRC_RULE
    method: str = "shazam"
    parameter_count: int | None = None
    ablations: list[str] = Field(default_factory=list)
    metrics: MetricsReport
    random_baseline: MetricsReport | None = None
    notes: list[str] = Field(default_factory=list)


def _as_bool_arrays(flags: Sequence[bool], labels: Sequence[bool]) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(flags, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    if f.shape != y.shape:
        raise EvaluationError(f"{f.size} flags vs {y.size} labels")
    if f.size == 0:
        raise EvaluationError("cannot score an empty series")
    return f, y


def confusion_counts(flags: Sequence[bool], labels: Sequence[bool]) -> dict[str, int]:
    f, y = _as_bool_arrays(flags, labels)
    tn, fp, fn, tp = confusion_matrix(y, f, labels=[False, True]).ravel()
    return {"tp": int(tp), "fp": int(fp), "fn": int(fn), "tn": int(tn)}


def prf1(
    flags: Sequence[bool],
    labels: Sequence[bool],
    notes: list[str] | None = None,
) -> tuple[float, float, float]:
    """
    Precision, recall and F1 of binary flags against labels.

    Zero denominators give 0 instead of NaN; a note describing each such case
    is appended to ``notes`` when given.
    """
    f, y = _as_bool_arrays(flags, labels)
    precision, recall, f1, _ = precision_recall_fscore_support(
        y, f, average="binary", pos_label=True, zero_division=0,
    )
    degenerate = []
    if not f.any():
        degenerate.append("precision undefined (no flags raised), reported as 0")
    if not y.any():
        degenerate.append("recall undefined (no positive labels), reported as 0")
    if f.any() and y.any() and precision + recall == 0:
        degenerate.append("f1 undefined (precision + recall = 0), reported as 0")
    for note in degenerate:
        logger.warning("[evaluation.prf1] %s", note)
    if notes is not None:
        notes.extend(degenerate)
    return float(precision), float(recall), float(f1)


def auprc(residuals: Sequence[float], labels: Sequence[bool]) -> float:
    """Average precision of the residual ranking."""
    r = np.asarray(residuals, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if r.shape != y.shape:
        raise EvaluationError(f"{r.size} residuals vs {y.size} labels")
    if not y.any():
        raise EvaluationError("AUPRC needs at least one positive label")
    return float(average_precision_score(y, r))


def pr_curve(residuals: Sequence[float], labels: Sequence[bool]) -> pd.DataFrame:
    """Operating points of the residual ranking; the last row is the empty-selection point."""
    y = np.asarray(labels, dtype=bool)
    if not y.any():
        raise EvaluationError("PR curve needs at least one positive label")
    precision, recall, thresholds = precision_recall_curve(y, np.asarray(residuals, dtype=np.float64))
    return pd.DataFrame({
        "threshold": np.append(thresholds, np.nan),
        "precision": precision,
        "recall": recall,
    })


def random_baseline(hazard_fraction: float) -> MetricsReport:
    """Expected metrics of flipping a fair coin per image when a fraction P is hazardous."""
    p = float(hazard_fraction)
    if not 0.0 < p <= 1.0:
        raise EvaluationError(f"hazard fraction must be in (0, 1], got {p}")
    return MetricsReport(
        precision=p,
        recall=RANDOM_RECALL,
        f1=p / (p + RANDOM_RECALL),
        auprc=p,
        n_images=0,
        hazard_fraction=p,
        notes=["analytic random guess"],
    )


def evaluate_scores(results: Sequence[LabeledScore]) -> MetricsReport:
    if not results:
        raise EvaluationError("no labelled scores to evaluate")
    flags = [r.flag for r in results]
    labels = [r.label for r in results]
    notes: list[str] = []
    precision, recall, f1 = prf1(flags, labels, notes)
    if any(labels):
        area = auprc([r.residual for r in results], labels)
    else:
        area = 0.0
        notes.append("auprc undefined (no positive labels), reported as 0")
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        auprc=area,
        n_images=len(results),
        hazard_fraction=float(np.mean(labels)),
        notes=notes,
        **confusion_counts(flags, labels),
    )


def build_report(
    results: Sequence[LabeledScore],
    baseline: MetricsReport | None = None,
    parameter_count: int | None = None,
    ablations: Sequence[str] = (),
) -> EvaluationReport:
    """Metrics of ``results`` next to the random-guess baseline for the same hazard fraction."""
    metrics = evaluate_scores(results)
    notes = []
    if baseline is None and metrics.hazard_fraction > 0:
        baseline = random_baseline(metrics.hazard_fraction)
    elif baseline is None:
        notes.append("random baseline undefined for a hazard fraction of 0")
    return EvaluationReport(
        parameter_count=parameter_count,
        ablations=list(ablations),
        metrics=metrics,
        random_baseline=baseline,
        notes=notes,
    )


def report_table(report: EvaluationReport) -> pd.DataFrame:
    """F1 / precision / recall / AUPRC / #params, one row per method."""
    rows = [{
        "Method": report.method if not report.ablations else f"{report.method} ({', '.join(report.ablations)})",
        "F1": report.metrics.f1,
        "Precision": report.metrics.precision,
        "Recall": report.metrics.recall,
        "AUPRC": report.metrics.auprc,
        "#Params": report.parameter_count if report.parameter_count is not None else "-",
    }]
    if report.random_baseline is not None:
        b = report.random_baseline
        rows.append({
            "Method": "random guess", "F1": b.f1, "Precision": b.precision,
            "Recall": b.recall, "AUPRC": b.auprc, "#Params": "-",
        })
    return pd.DataFrame(rows)


def emit_report(
    results: Sequence[LabeledScore],
    out_dir: str | Path,
    baseline: MetricsReport | None = None,
    parameter_count: int | None = None,
    ablations: Sequence[str] = (),
) -> EvaluationReport:
    """Write report.json, report.txt and pr_curve.csv into ``out_dir``."""
    report = build_report(results, baseline, parameter_count, ablations)
    out = Path(out_dir)
    save_model_json(report, out / REPORT_JSON)

    m = report.metrics
    lines = [
        report_table(report).to_string(index=False, float_format=lambda v: f"{v:.3f}"),
        "",
        f"images: {m.n_images}  hazard fraction: {m.hazard_fraction:.3f}",
        f"TP {m.tp}  FP {m.fp}  FN {m.fn}  TN {m.tn}",
        f"AUPRC rule: {report.auprc_rule}",
    ]
    lines += [f"note: {n}" for n in m.notes + report.notes]
    atomic_write_text(out / REPORT_TEXT, "\n".join(lines) + "\n")

    labels = [r.label for r in results]
    if any(labels):
        write_csv(pr_curve([r.residual for r in results], labels), out / PR_CURVE_CSV)
    logger.info("[evaluation.emit_report] F1 %.3f, AUPRC %.3f over %d images", m.f1, m.auprc, m.n_images)
    return report
