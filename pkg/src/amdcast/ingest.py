"""Loading, scaling, cyclic time encoding and supervised windowing.

A :class:`TimeSeriesFrame` keeps the seven monitored parameters as a
``(rows, 7)`` float64 array with NaN marking missing cells. Missing cells
are allowed right after loading and after anomaly removal; windowing
refuses them.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from amdcast.errors import (
    ColumnMismatch,
    DataError,
    DuplicateTimestamp,
    EmptyDataset,
    NegativeUnderLog,
    ParseError,
    TooShort,
)

PARAMETERS: tuple[str, ...] = ("pH", "ORP", "Conductivity", "TDS", "SO4", "Fe", "Mn")
DATE_COLUMN = "date"
YEAR_DAYS = 365.25


@dataclass(frozen=True)
class TimeSeriesFrame:
    dates: tuple[dt.date, ...]
    values: np.ndarray
    columns: tuple[str, ...] = PARAMETERS

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            values = values.reshape(len(self.dates), -1)
        if values.shape != (len(self.dates), len(self.columns)):
            raise ColumnMismatch(
                f"values shape {values.shape} does not match "
                f"{len(self.dates)} dates x {len(self.columns)} columns"
            )
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DataError(f"dates must be strictly increasing ({a} then {b})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "columns", tuple(self.columns))

    def __len__(self) -> int:
        return len(self.dates)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    def with_values(self, values: np.ndarray) -> "TimeSeriesFrame":
        return TimeSeriesFrame(self.dates, values, self.columns)

    def tail(self, n: int) -> "TimeSeriesFrame":
        n = min(n, len(self))
        return TimeSeriesFrame(self.dates[len(self) - n :], self.values[len(self) - n :], self.columns)


def parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def load_csv(path: str | Path) -> TimeSeriesFrame:
    """Read a ``date,pH,ORP,...`` CSV into a date-sorted frame.

    Empty cells become NaN. Row numbers in errors are 1-based data rows
    (the header is row 0).

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        ParseError: On an unparseable date or numeric cell.
        DuplicateTimestamp: If two rows share a date.
        ColumnMismatch: If the header is not the expected one.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path} is empty") from None
        expected = [DATE_COLUMN, *PARAMETERS]
        if header != expected:
            raise ColumnMismatch(f"header {header} != {expected}")
        rows: list[tuple[dt.date, list[float]]] = []
        for i, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(expected):
                raise ParseError(i, "<row>", ",".join(record))
            try:
                day = parse_date(record[0])
            except ValueError:
                raise ParseError(i, DATE_COLUMN, record[0]) from None
            cells = []
            for name, cell in zip(PARAMETERS, record[1:]):
                cell = cell.strip()
                if cell == "":
                    cells.append(math.nan)
                    continue
                try:
                    x = float(cell)
                except ValueError:
                    raise ParseError(i, name, cell) from None
                if not math.isfinite(x):
                    raise ParseError(i, name, cell)
                cells.append(x)
            rows.append((day, cells))

    rows.sort(key=lambda r: r[0])
    for (a, _), (b, _) in zip(rows, rows[1:]):
        if a == b:
            raise DuplicateTimestamp(f"date {a.isoformat()} appears more than once")
    dates = tuple(r[0] for r in rows)
    values = np.array([r[1] for r in rows], dtype=np.float64).reshape(len(rows), len(PARAMETERS))
    return TimeSeriesFrame(dates, values)


def format_value(x: float) -> str:
    if math.isnan(x):
        return ""
    return repr(float(x))


def write_csv(frame: TimeSeriesFrame, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([DATE_COLUMN, *frame.columns])
        for day, row in zip(frame.dates, frame.values):
            writer.writerow([day.isoformat(), *(format_value(x) for x in row)])


def cyclic_encode(dates: Sequence[dt.date]) -> tuple[np.ndarray, np.ndarray]:
    """Annual sine/cosine encoding of calendar dates.

    The angle is ``2*pi*(day_of_year - 1) / 365.25`` so January 1 maps to
    ``(0, 1)``.
    """
    doy = np.array([d.timetuple().tm_yday for d in dates], dtype=np.float64)
    theta = 2.0 * np.pi * (doy - 1.0) / YEAR_DAYS
    return np.sin(theta), np.cos(theta)


def time_covariates(dates: Sequence[dt.date]) -> np.ndarray:
    """``(len(dates), 2)`` array of ``[sin, cos]`` rows."""
    s, c = cyclic_encode(dates)
    return np.column_stack([s, c]) if len(dates) else np.zeros((0, 2))


class TransformKind(str, Enum):
    MINMAX = "minmax"
    LOG1P_MINMAX = "log1p_minmax"


DEFAULT_TRANSFORMS: dict[str, TransformKind] = {
    "pH": TransformKind.MINMAX,
    "ORP": TransformKind.MINMAX,
    "Conductivity": TransformKind.LOG1P_MINMAX,
    "TDS": TransformKind.LOG1P_MINMAX,
    "SO4": TransformKind.LOG1P_MINMAX,
    "Fe": TransformKind.LOG1P_MINMAX,
    "Mn": TransformKind.LOG1P_MINMAX,
}


@dataclass(frozen=True)
class ScalerParams:
    """Per-column transform with the min/max captured after the transform."""

    columns: tuple[str, ...]
    kinds: tuple[TransformKind, ...]
    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "kinds": [k.value for k in self.kinds],
            "mins": list(self.mins),
            "maxs": list(self.maxs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(
            tuple(d["columns"]),
            tuple(TransformKind(k) for k in d["kinds"]),
            tuple(float(x) for x in d["mins"]),
            tuple(float(x) for x in d["maxs"]),
        )

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Scale a raw ``(n, columns)`` array; NaN passes through."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != len(self.columns):
            raise ColumnMismatch(f"expected {len(self.columns)} columns, got {values.shape[-1]}")
        out = np.empty_like(values)
        for j, kind in enumerate(self.kinds):
            x = values[..., j]
            if kind is TransformKind.LOG1P_MINMAX:
                if np.any(x < 0):
                    raise NegativeUnderLog(f"column {self.columns[j]} has negative values")
                x = np.log1p(x)
            span = self.maxs[j] - self.mins[j]
            out[..., j] = (x - self.mins[j]) / span if span > 0 else np.where(np.isnan(x), np.nan, 0.0)
        return out

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        scaled = np.asarray(scaled, dtype=np.float64)
        if scaled.shape[-1] != len(self.columns):
            raise ColumnMismatch(f"expected {len(self.columns)} columns, got {scaled.shape[-1]}")
        out = np.empty_like(scaled)
        for j, kind in enumerate(self.kinds):
            x = scaled[..., j] * (self.maxs[j] - self.mins[j]) + self.mins[j]
            out[..., j] = np.expm1(x) if kind is TransformKind.LOG1P_MINMAX else x
        return out


def fit_scaler(
    frame: TimeSeriesFrame, kinds: dict[str, TransformKind | str] | None = None
) -> ScalerParams:
    """Capture per-column min/max, after ``log1p`` for log-scaled columns.

    Missing cells are ignored. A constant column gets ``min == max`` and
    scales to 0.0 everywhere.

    Raises:
        NegativeUnderLog: A log-scaled column holds a negative value.
        EmptyDataset: A column has no observed values at all.
    """
    kinds = {**DEFAULT_TRANSFORMS, **(kinds or {})}
    mins, maxs, chosen = [], [], []
    for j, name in enumerate(frame.columns):
        kind = TransformKind(kinds.get(name, TransformKind.MINMAX))
        x = frame.values[:, j]
        x = x[~np.isnan(x)]
        if x.size == 0:
            raise EmptyDataset(f"column {name} has no observed values")
        if kind is TransformKind.LOG1P_MINMAX:
            if np.any(x < 0):
                raise NegativeUnderLog(f"column {name} has negative values; log1p undefined")
            x = np.log1p(x)
        mins.append(float(x.min()))
        maxs.append(float(x.max()))
        chosen.append(kind)
    return ScalerParams(tuple(frame.columns), tuple(chosen), tuple(mins), tuple(maxs))


def _check_columns(params: ScalerParams, frame: TimeSeriesFrame) -> None:
    if tuple(frame.columns) != params.columns:
        raise ColumnMismatch(f"frame columns {frame.columns} != scaler columns {params.columns}")


def apply_scaler(params: ScalerParams, frame: TimeSeriesFrame) -> TimeSeriesFrame:
    _check_columns(params, frame)
    return frame.with_values(params.transform(frame.values))


def invert_scaler(params: ScalerParams, frame: TimeSeriesFrame) -> TimeSeriesFrame:
    _check_columns(params, frame)
    return frame.with_values(params.inverse(frame.values))


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised next-step samples cut from a complete frame.

    Attributes:
        window: Number of past rows per sample (0 means covariates only).
        past: ``(n, window, features)`` past values.
        past_cov: ``(n, window, 2)`` sin/cos of the past rows' dates.
        target_cov: ``(n, 2)`` sin/cos of the target date.
        targets: ``(n, features)`` values at the target row.
        target_dates: Date of each target row.
    """

    window: int
    past: np.ndarray
    past_cov: np.ndarray
    target_cov: np.ndarray
    targets: np.ndarray
    target_dates: tuple[dt.date, ...] = field(default=())

    def __len__(self) -> int:
        return self.targets.shape[0]

    def subset(self, idx) -> "WindowedDataset":
        idx = np.asarray(idx)
        dates = tuple(self.target_dates[i] for i in idx) if self.target_dates else ()
        return WindowedDataset(
            self.window, self.past[idx], self.past_cov[idx], self.target_cov[idx], self.targets[idx], dates
        )


def make_windows(frame: TimeSeriesFrame, window: int) -> WindowedDataset:
    """Slice ``frame`` into ``len(frame) - window`` next-step samples.

    Sample ``k`` uses rows ``[k, k + window)`` as inputs and row
    ``k + window`` as target. Time covariates are derived from the frame
    dates.

    Raises:
        TooShort: If the frame has fewer than ``window + 1`` rows.
        DataError: If any cell is missing.
    """
    if window < 0:
        raise ValueError("window must be non-negative")
    n = len(frame)
    if n < window + 1:
        raise TooShort(f"{n} rows cannot fill a window of {window} plus one target")
    if np.isnan(frame.values).any():
        raise DataError("frame still has missing cells; interpolate before windowing")
    values = np.asarray(frame.values)
    cov = time_covariates(frame.dates)
    count = n - window
    idx = np.arange(count)[:, None] + np.arange(window)[None, :]
    return WindowedDataset(
        window=window,
        past=values[idx].reshape(count, window, values.shape[1]),
        past_cov=cov[idx].reshape(count, window, 2),
        target_cov=cov[window:],
        targets=values[window:].copy(),
        target_dates=tuple(frame.dates[window:]),
    )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train fraction must lie in (0, 1), got {self.train_fraction}")


def split_count(n: int, fraction: float) -> int:
    # Guard against 0.7 * 10 = 6.999... style rounding.
    return int(math.floor(fraction * n + 1e-9))


def chrono_split(dataset: WindowedDataset, spec: SplitSpec) -> tuple[WindowedDataset, WindowedDataset]:
    """First ``floor(fraction * n)`` samples train, the rest validate."""
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("cannot split an empty dataset")
    k = split_count(n, spec.train_fraction)
    return dataset.subset(np.arange(k)), dataset.subset(np.arange(k, n))
