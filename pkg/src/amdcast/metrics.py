"""Regression metrics and a train/validation fit diagnostic."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from amdcast.errors import DimensionMismatch, EmptyDataset, EmptyHistory, ZeroVariance


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise DimensionMismatch(f"observed length {y.size} != predicted length {yhat.size}")
    if y.size == 0:
        raise EmptyDataset("metrics need at least one value")
    return y, yhat


def mse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def nse(y, yhat) -> float:
    """Nash-Sutcliffe efficiency: ``1 - SSE / sum((y - mean(y))**2)``.

    Raises:
        ZeroVariance: All observed values are equal.
    """
    y, yhat = _pair(y, yhat)
    if y.size < 2:
        raise EmptyDataset("NSE needs at least two observations")
    denom = float(np.sum((y - y.mean()) ** 2))
    if denom == 0.0:
        raise ZeroVariance("observed series has zero variance")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / denom


@dataclass(frozen=True)
class MetricRow:
    name: str
    mse: float
    mae: float
    nse: float
    n: int


@dataclass(frozen=True)
class MetricReport:
    """Per-parameter and overall metrics for one partition.

    ``overall`` is computed on all parameters concatenated column after
    column, in the same (scaled) units the values were given in.
    """

    partition: str
    per_parameter: tuple[MetricRow, ...]
    overall: MetricRow
    unit_space: str = "scaled_0_1"


def _safe_nse(y, yhat) -> float:
    try:
        return nse(y, yhat)
    except (ZeroVariance, EmptyDataset):
        return float("nan")


def metric_report(partition: str, y, yhat, columns, unit_space: str = "scaled_0_1") -> MetricReport:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise DimensionMismatch(f"{y.shape} vs {yhat.shape}")
    rows = tuple(
        MetricRow(name, mse(y[:, j], yhat[:, j]), mae(y[:, j], yhat[:, j]), _safe_nse(y[:, j], yhat[:, j]), y.shape[0])
        for j, name in enumerate(columns)
    )
    flat_y, flat_p = y.T.ravel(), yhat.T.ravel()
    overall = MetricRow("overall", mse(flat_y, flat_p), mae(flat_y, flat_p), _safe_nse(flat_y, flat_p), flat_y.size)
    return MetricReport(partition, rows, overall, unit_space)


def write_metric_reports(reports, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["partition", "parameter", "mse", "mae", "nse", "n", "unit_space"])
        for rep in reports:
            for row in (*rep.per_parameter, rep.overall):
                w.writerow([rep.partition, row.name, repr(row.mse), repr(row.mae), repr(row.nse), row.n, rep.unit_space])


class FitDiagnosis(str, Enum):
    GOOD_FIT = "GoodFit"
    OVERFIT_RISK = "OverfitRisk"
    UNDERFIT_RISK = "UnderfitRisk"


def fit_diagnosis(train_loss: float, val_loss: float, ratio: float = 1.5) -> FitDiagnosis:
    """Compare validation to training loss at the chosen epoch."""
    if val_loss > ratio * train_loss:
        return FitDiagnosis.OVERFIT_RISK
    if val_loss < train_loss:
        return FitDiagnosis.UNDERFIT_RISK
    return FitDiagnosis.GOOD_FIT


def diagnose_history(history, ratio: float = 1.5) -> FitDiagnosis:
    """:func:`fit_diagnosis` on the best epoch of a ``TrainHistory``."""
    if not history.train_loss:
        raise EmptyHistory("training history is empty")
    tr, va = history.best_losses()
    return fit_diagnosis(tr, va, ratio)
