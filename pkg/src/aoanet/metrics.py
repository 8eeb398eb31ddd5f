"""Penalized angle errors, confusion matrices, error CDFs and SNR sweeps.

Misclassified records are scored under their *true* source count. For a
single source, the error is measured between the truth and the mean of
the two predicted angles. For two sources, the squared (or absolute)
errors of both angles are summed per record.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass
class EvalRecord:
    true_L: int
    true_angles: list
    pred_L: int
    pred_angles: list  # raw decoded heads; a single value is used for both
    snr_db: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.true_angles = sorted(float(a) for a in self.true_angles)
        self.pred_angles = sorted(float(a) for a in self.pred_angles)
        if len(self.true_angles) != self.true_L or self.true_L not in (1, 2):
            raise DomainError(f"true_angles {self.true_angles} inconsistent with L={self.true_L}")
        if len(self.pred_angles) not in (1, 2):
            raise DomainError("pred_angles must hold one or two angles")

    @property
    def pred_pair(self):
        a = self.pred_angles
        return (a[0], a[0]) if len(a) == 1 else (a[0], a[1])


def _terms(record: EvalRecord):
    """Per-record ``(squared term, absolute term)`` as printed in the metric."""
    p1, p2 = record.pred_pair
    if record.true_L == 1:
        e = 0.5 * (p1 + p2) - record.true_angles[0]
        return e * e, abs(e)
    e1 = p1 - record.true_angles[0]
    e2 = p2 - record.true_angles[1]
    return e1 * e1 + e2 * e2, abs(e1) + abs(e2)


def _check(records):
    records = list(records)
    if not records:
        raise DomainError("no records to score")
    return records


def penalized_rmse(records, normalized: bool = False) -> float:
    """Root of the mean per-record squared term.

    ``normalized=True`` divides two-source terms by 2 (per-angle variant,
    for comparison with per-angle metrics elsewhere).
    """
    records = _check(records)
    sq = [(_terms(r)[0] / (2.0 if normalized and r.true_L == 2 else 1.0)) for r in records]
    return float(np.sqrt(np.mean(sq)))


def penalized_mae(records, normalized: bool = False) -> float:
    records = _check(records)
    ab = [(_terms(r)[1] / (2.0 if normalized and r.true_L == 2 else 1.0)) for r in records]
    return float(np.mean(ab))


def per_record_rmse(records) -> np.ndarray:
    return np.sqrt([_terms(r)[0] for r in _check(records)])


def metrics_by_class(records) -> dict:
    """RMSE/MAE (printed and per-angle variants) per true source count and pooled."""
    records = _check(records)
    out = {}
    groups = {"all": records, 1: [r for r in records if r.true_L == 1], 2: [r for r in records if r.true_L == 2]}
    for key, group in groups.items():
        if not group:
            continue
        out[key] = {
            "n": len(group),
            "rmse": penalized_rmse(group),
            "mae": penalized_mae(group),
            "rmse_per_angle": penalized_rmse(group, normalized=True),
            "mae_per_angle": penalized_mae(group, normalized=True),
            "accuracy": float(np.mean([r.pred_L == r.true_L for r in group])),
        }
    return out


def classification_accuracy(records) -> float:
    records = _check(records)
    return float(np.mean([r.pred_L == r.true_L for r in records]))


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows predicted L (1, 2), columns true L (1, 2)

    @property
    def percentages(self) -> np.ndarray:
        totals = self.counts.sum(axis=0, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(totals > 0, 100.0 * self.counts / np.maximum(totals, 1), 0.0)

    def to_text(self) -> str:
        pct = self.percentages
        lines = [
            f"{'':>14}{'true L=1':>12}{'true L=2':>12}",
            f"{'pred L=1':>14}{pct[0, 0]:>11.3f}%{pct[0, 1]:>11.3f}%",
            f"{'pred L=2':>14}{pct[1, 0]:>11.3f}%{pct[1, 1]:>11.3f}%",
            f"{'samples':>14}{int(self.counts[:, 0].sum()):>12d}{int(self.counts[:, 1].sum()):>12d}",
        ]
        return "\n".join(lines)

    def to_csv_rows(self):
        pct = self.percentages
        return [["pred_L", "true_L", "count", "percent"]] + [
            [i + 1, j + 1, int(self.counts[i, j]), float(pct[i, j])] for i in range(2) for j in range(2)]


def confusion_matrix(records) -> ConfusionMatrix:
    records = _check(records)
    counts = np.zeros((2, 2), dtype=int)
    for r in records:
        counts[r.pred_L - 1, r.true_L - 1] += 1
    return ConfusionMatrix(counts)


def error_cdf(records, grid) -> np.ndarray:
    """Fraction of records whose per-record RMSE is <= each grid value."""
    errs = np.sort(per_record_rmse(records))
    grid = np.asarray(grid, dtype=float)
    return np.searchsorted(errs, grid, side="right") / errs.size


def snr_sweep(estimator, test_sets: dict) -> list[dict]:
    """Score ``estimator`` on test sets keyed by SNR (dB).

    ``estimator`` maps a test set to a list of :class:`EvalRecord`; each
    row carries the pooled penalized RMSE/MAE and ``log10_rmse``.
    """
    rows = []
    for snr in sorted(test_sets):
        recs = estimator(test_sets[snr])
        rmse = penalized_rmse(recs)
        rows.append({"snr_db": float(snr), "rmse": rmse, "mae": penalized_mae(recs),
                     "log10_rmse": float(np.log10(rmse)) if rmse > 0 else float("-inf"),
                     "accuracy": classification_accuracy(recs), "n": len(recs)})
    return rows
