"""Synthetic kinetic-test data: trend + annual cycle + noise + planted spikes.

The generator produces a weekly table shaped like a real leach-column run,
the noiseless daily curves behind it, the indices of the rows that were
deliberately corrupted, and a sparse set of "measured" follow-up values
falling inside a 60-day window after the last weekly sample.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from amdcast.ingest import PARAMETERS, TimeSeriesFrame, cyclic_encode

DEFAULT_START = dt.date(2021, 2, 9)
MEASURED_OFFSETS = (4, 11, 18, 25, 32, 39, 46, 53, 60)


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def truth_curves(days: np.ndarray, dates) -> np.ndarray:
    """Noise-free parameter values for day offsets ``days``.

    Every parameter follows an annual cycle on top of a mild linear trend;
    the dissolved species also carry a short initial flush.
    """
    s, c = cyclic_encode(dates)
    seas = s + 0.3 * c
    years = days / 365.25
    ph = 3.5 - 0.05 * years + 0.2 * seas
    orp = 450.0 + 12.0 * years - 40.0 * seas
    flush = np.exp(-days / 45.0)
    cond = 2800.0 + 300.0 * flush - 60.0 * years + 600.0 * seas
    tds = 0.64 * cond + 30.0 * seas
    so4 = 1600.0 + 200.0 * flush + 350.0 * seas
    fe = 110.0 - 8.0 * years + 40.0 * seas
    mn = 7.0 + 1.0 * flush + 2.5 * seas
    return np.column_stack([ph, orp, cond, tds, so4, fe, mn])


NOISE_SD = np.array([0.03, 6.0, 0.03, 0.03, 0.03, 0.04, 0.04])
MULTIPLICATIVE = np.array([False, False, True, True, True, True, True])


def _add_noise(values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    eps = rng.standard_normal(values.shape) * NOISE_SD
    return np.where(MULTIPLICATIVE, values * np.exp(eps), values + eps)


@dataclass(frozen=True)
class SyntheticDataset:
    weekly: TimeSeriesFrame
    anomaly_indices: tuple[int, ...]
    truth_daily: TimeSeriesFrame
    measured: TimeSeriesFrame


def generate(
    seed: int = 1,
    rows: int = 83,
    start: dt.date = DEFAULT_START,
    n_anomalies: int = 8,
    measured_offsets: tuple[int, ...] = MEASURED_OFFSETS,
) -> SyntheticDataset:
    rng = np.random.default_rng(seed)
    weekly_dates = tuple(start + dt.timedelta(days=7 * k) for k in range(rows))
    weekly_days = np.arange(rows, dtype=np.float64) * 7.0
    weekly = _add_noise(truth_curves(weekly_days, weekly_dates), rng)

    anomalies = np.sort(rng.choice(np.arange(1, rows), size=n_anomalies, replace=False))
    for k in anomalies:
        cols = rng.choice(len(PARAMETERS), size=3, replace=False)
        for j in cols:
            factor = rng.uniform(2.5, 4.0)
            if j == 0:
                weekly[k, j] += rng.choice([-1.0, 1.0]) * 1.2
            elif j == 1:
                weekly[k, j] += rng.choice([-1.0, 1.0]) * 220.0
            else:
                weekly[k, j] *= factor if rng.random() < 0.5 else 1.0 / factor
    weekly = np.round(weekly, 4)

    horizon_end = weekly_dates[-1] + dt.timedelta(days=max(measured_offsets, default=0))
    n_daily = (horizon_end - start).days + 1
    daily_dates = tuple(start + dt.timedelta(days=i) for i in range(n_daily))
    daily = truth_curves(np.arange(n_daily, dtype=np.float64), daily_dates)

    m_dates = tuple(weekly_dates[-1] + dt.timedelta(days=o) for o in measured_offsets)
    m_days = np.array([(d - start).days for d in m_dates], dtype=np.float64)
    measured = np.round(_add_noise(truth_curves(m_days, m_dates), rng), 4) if m_dates else np.zeros((0, 7))

    return SyntheticDataset(
        weekly=TimeSeriesFrame(weekly_dates, weekly),
        anomaly_indices=tuple(int(i) for i in anomalies),
        truth_daily=TimeSeriesFrame(daily_dates, daily),
        measured=TimeSeriesFrame(m_dates, measured),
    )
