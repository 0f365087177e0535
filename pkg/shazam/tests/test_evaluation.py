import datetime as dt
import json

import numpy as np
import pandas as pd
import pytest

from shazam.errors import EvaluationError
from shazam.evaluation import (
    PR_CURVE_CSV, REPORT_JSON, REPORT_TEXT, auprc, build_report, confusion_counts, emit_report, pr_curve, prf1,
    random_baseline,
)
from shazam.models import AUPRC_RULE, REPORT_SCHEMA_VERSION, LabeledScore


def labeled(residuals, labels) -> list[LabeledScore]:
    start = dt.date(2020, 1, 1)
    return [
        LabeledScore(date=start + dt.timedelta(days=10 * i), residual=float(r), flag=bool(r > 0), label=bool(y))
        for i, (r, y) in enumerate(zip(residuals, labels))
    ]


# === prf1 ===
def test_prf1_arithmetic():
    flags = [1, 1, 1, 1, 0, 0]
    labels = [1, 1, 1, 0, 1, 0]
    assert prf1(flags, labels) == pytest.approx((0.75, 0.75, 0.75))
    assert confusion_counts(flags, labels) == {"tp": 3, "fp": 1, "fn": 1, "tn": 1}


def test_no_flags_is_degenerate():
    notes = []
    precision, recall, f1 = prf1([0, 0, 0], [1, 0, 1], notes)
    assert (precision, recall, f1) == (0.0, 0.0, 0.0)
    assert any("precision undefined" in n for n in notes)


def test_perfect_flags():
    assert prf1([1, 0, 1], [1, 0, 1]) == (1.0, 1.0, 1.0)


def test_length_mismatch():
    with pytest.raises(EvaluationError):
        prf1([1, 0], [1])


def test_f1_harmonic_mean_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        flags, labels = rng.random(40) < 0.5, rng.random(40) < 0.4
        p, r, f1 = prf1(flags, labels)
        if p + r > 0:
            assert f1 == pytest.approx(2 * p * r / (p + r))


# === AUPRC ===
def test_auprc_perfect_separation():
    assert auprc([0.9, 0.8, -0.1, -0.5], [1, 1, 0, 0]) == 1.0


def test_auprc_single_positive_ranked_last():
    residuals = np.arange(10, 0, -1, dtype=float)
    labels = [0] * 9 + [1]
    assert auprc(residuals, labels) == pytest.approx(0.1)


def test_auprc_needs_a_positive():
    with pytest.raises(EvaluationError, match="positive"):
        auprc([0.1, 0.2], [0, 0])


def test_auprc_of_random_residuals_is_hazard_fraction():
    p = 0.3
    values = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        labels = rng.random(500) < p
        values.append(auprc(rng.normal(size=500), labels) - labels.mean())
    assert abs(np.mean(values)) < 0.05


def test_auprc_invariant_under_monotone_transform():
    rng = np.random.default_rng(1)
    residuals, labels = rng.normal(size=60), rng.random(60) < 0.3
    assert auprc(residuals, labels) == pytest.approx(auprc(np.exp(3 * residuals), labels))


def test_auprc_groups_ties():
    # one tied block holding both classes counts as one operating point
    assert auprc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == pytest.approx(0.5)


def test_pr_curve_table():
    curve = pr_curve([0.9, 0.2, -0.3], [1, 0, 1])
    assert list(curve.columns) == ["threshold", "precision", "recall"]
    assert curve["recall"].iloc[-1] == 0.0


# === Random baseline ===
@pytest.mark.parametrize(
    "p, f1",
    [(0.748, 0.599), (0.982, 0.662), (0.918, 0.647), (0.229, 0.314)],
)
def test_random_baseline_reference_rows(p, f1):
    # the hazard fractions are themselves rounded to three decimals
    report = random_baseline(p)
    assert report.f1 == pytest.approx(f1, abs=1e-3)
    assert report.precision == p and report.recall == 0.5 and report.auprc == p


def test_random_baseline_monotone_and_bounds():
    f1s = [random_baseline(p).f1 for p in np.linspace(0.01, 1.0, 50)]
    assert all(b > a for a, b in zip(f1s, f1s[1:]))
    with pytest.raises(EvaluationError):
        random_baseline(0.0)


# === Reports ===
def test_report_consistent_with_recomputation():
    results = labeled([0.3, 0.1, -0.2, -0.4, 0.05, -0.1], [1, 1, 0, 0, 0, 1])
    report = build_report(results, parameter_count=478_614)
    m = report.metrics
    assert (m.precision, m.recall, m.f1) == pytest.approx(prf1([r.flag for r in results], [r.label for r in results]))
    assert m.auprc == pytest.approx(auprc([r.residual for r in results], [r.label for r in results]))
    assert m.tp + m.fp + m.fn + m.tn == m.n_images == 6
    assert report.random_baseline.f1 == pytest.approx(0.5 / 1.0)
    assert report.parameter_count == 478_614
    assert report.schema_version == REPORT_SCHEMA_VERSION and report.auprc_rule == AUPRC_RULE


def test_report_without_positive_labels():
    report = build_report(labeled([0.1, -0.2, -0.3], [0, 0, 0]))
    assert report.metrics.recall == 0.0
    assert report.metrics.auprc == 0.0
    assert report.random_baseline is None
    assert any("recall undefined" in n for n in report.metrics.notes)


def test_empty_results_rejected():
    with pytest.raises(EvaluationError):
        build_report([])


def test_emit_report_files(tmp_path):
    results = labeled([0.3, 0.1, -0.2, -0.4], [1, 0, 0, 1])
    report = emit_report(results, tmp_path, parameter_count=1234, ablations=["flat_threshold"])
    data = json.loads((tmp_path / REPORT_JSON).read_text())
    assert data["metrics"]["f1"] == report.metrics.f1
    assert data["parameter_count"] == 1234
    text = (tmp_path / REPORT_TEXT).read_text()
    assert "random guess" in text and "#Params" in text and "flat_threshold" in text
    curve = pd.read_csv(tmp_path / PR_CURVE_CSV)
    assert len(curve) >= 2
