"""Autoregressive rollout, sparse evaluation and report files."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from amdcast.errors import NoOverlap, WindowMismatch
from amdcast.ingest import DATE_COLUMN, PARAMETERS, ScalerParams, TimeSeriesFrame, format_value, time_covariates
from amdcast.metrics import mae, mse
from amdcast.nn import ModelInputs, ModelSpec, Params, predict


@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec
    params: Params
    scaler: ScalerParams


@dataclass(frozen=True)
class ForecastResult:
    """``predictions`` are in original units; ``scaled`` holds the raw model outputs."""

    dates: tuple[dt.date, ...]
    predictions: np.ndarray
    scaled: np.ndarray
    spec: ModelSpec
    columns: tuple[str, ...] = PARAMETERS

    @property
    def horizon(self) -> int:
        return len(self.dates)

    def as_frame(self) -> TimeSeriesFrame:
        return TimeSeriesFrame(self.dates, self.predictions, self.columns)


def step_inputs(window_values: np.ndarray, window_dates, target_date: dt.date) -> ModelInputs:
    """Batch-of-one inputs predicting ``target_date`` from a scaled window."""
    w, n_features = window_values.shape
    return ModelInputs(
        past=window_values.reshape(1, w, n_features),
        past_cov=time_covariates(window_dates).reshape(1, w, 2),
        target_cov=time_covariates([target_date]),
    )


def rollout(
    model: TrainedModel,
    history: TimeSeriesFrame,
    steps: int,
    last_date: dt.date | None = None,
) -> ForecastResult:
    """Forecast ``steps`` days past the end of ``history``.

    ``history`` holds exactly ``window`` rows in original units. Each
    prediction is appended to the scaled window and the oldest row dropped
    before the next step; the time encodings of the future dates are known
    in advance. A covariates-only FNN (window 0) takes an empty history and
    needs ``last_date``.

    Raises:
        WindowMismatch: ``history`` length differs from the model window.
    """
    spec = model.spec
    if len(history) != spec.window:
        raise WindowMismatch(f"model window is {spec.window}, history has {len(history)} rows")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if last_date is None:
        if not history.dates:
            raise WindowMismatch("empty history needs an explicit last_date")
        last_date = history.dates[-1]
    window = model.scaler.transform(np.asarray(history.values))
    if np.isnan(window).any():
        raise WindowMismatch("history window has missing cells")
    window_dates = list(history.dates)
    dates, outputs = [], []
    for h in range(1, steps + 1):
        target = last_date + dt.timedelta(days=h)
        pred = predict(spec, model.params, step_inputs(window, window_dates, target))[0]
        outputs.append(pred)
        dates.append(target)
        if spec.window:
            window = np.vstack([window[1:], pred])
            window_dates = window_dates[1:] + [target]
    scaled = np.array(outputs).reshape(steps, spec.n_outputs)
    return ForecastResult(tuple(dates), model.scaler.inverse(scaled), scaled, spec, model.scaler.columns)


@dataclass(frozen=True)
class SparseRow:
    parameter: str
    mse: float
    mae: float
    n: int


@dataclass(frozen=True)
class SparseEvaluation:
    matched_dates: tuple[dt.date, ...]
    rows: tuple[SparseRow, ...]
    unit_space: str = "original"


def evaluate_sparse(forecast: ForecastResult, measured: TimeSeriesFrame) -> SparseEvaluation:
    """Compare a forecast with measurements falling on forecast dates.

    Dates are matched exactly; missing measured cells are skipped per
    parameter.

    Raises:
        NoOverlap: No measured date lies inside the forecast horizon.
    """
    pos = {d: i for i, d in enumerate(forecast.dates)}
    pairs = [(pos[d], k) for k, d in enumerate(measured.dates) if d in pos]
    if not pairs:
        raise NoOverlap("no measured date falls inside the forecast horizon")
    f_idx = np.array([p[0] for p in pairs])
    m_idx = np.array([p[1] for p in pairs])
    rows = []
    for j, name in enumerate(forecast.columns):
        y = np.asarray(measured.values)[m_idx, measured.columns.index(name)]
        yhat = forecast.predictions[f_idx, j]
        ok = ~np.isnan(y)
        if ok.any():
            rows.append(SparseRow(name, mse(y[ok], yhat[ok]), mae(y[ok], yhat[ok]), int(ok.sum())))
        else:
            rows.append(SparseRow(name, math.nan, math.nan, 0))
    return SparseEvaluation(tuple(forecast.dates[i] for i in f_idx), tuple(rows))


# ---------------------------------------------------------------------------
# Report files

SVG_W, SVG_H = 800, 300
_PAD_L, _PAD_R, _PAD_T, _PAD_B = 60, 20, 30, 40


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def render_svg(
    name: str,
    hist_dates,
    hist_values,
    fc_dates,
    fc_values,
    meas_dates=(),
    meas_values=(),
) -> str:
    """Static line chart: history (grey), forecast (blue), measurements (red dots)."""
    all_dates = list(hist_dates) + list(fc_dates) + list(meas_dates)
    vals = np.concatenate(
        [np.asarray(hist_values, float), np.asarray(fc_values, float), np.asarray(meas_values, float)]
    )
    vals = vals[~np.isnan(vals)]
    d0 = min(all_dates)
    span_d = max(1, (max(all_dates) - d0).days)
    lo, hi = (float(vals.min()), float(vals.max())) if vals.size else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    plot_w = SVG_W - _PAD_L - _PAD_R
    plot_h = SVG_H - _PAD_T - _PAD_B

    def xy(d, v):
        x = _PAD_L + plot_w * (d - d0).days / span_d
        y = _PAD_T + plot_h * (1.0 - (v - lo) / (hi - lo))
        return _fmt(x), _fmt(y)

    def polyline(dates, values, color):
        pts = " ".join(",".join(xy(d, v)) for d, v in zip(dates, values) if not math.isnan(v))
        if not pts:
            return ""
        return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_W} {SVG_H}" width="{SVG_W}" height="{SVG_H}">',
        f'<rect x="0" y="0" width="{SVG_W}" height="{SVG_H}" fill="white"/>',
        f'<text x="{_PAD_L}" y="18" font-family="sans-serif" font-size="14">{name}</text>',
        f'<line x1="{_PAD_L}" y1="{SVG_H - _PAD_B}" x2="{SVG_W - _PAD_R}" y2="{SVG_H - _PAD_B}" stroke="black"/>',
        f'<line x1="{_PAD_L}" y1="{_PAD_T}" x2="{_PAD_L}" y2="{SVG_H - _PAD_B}" stroke="black"/>',
        f'<text x="4" y="{_PAD_T + 4}" font-family="sans-serif" font-size="10">{hi:.4g}</text>',
        f'<text x="4" y="{SVG_H - _PAD_B}" font-family="sans-serif" font-size="10">{lo:.4g}</text>',
        f'<text x="{_PAD_L}" y="{SVG_H - 10}" font-family="sans-serif" font-size="10">{d0.isoformat()}</text>',
        f'<text x="{SVG_W - _PAD_R - 60}" y="{SVG_H - 10}" font-family="sans-serif" font-size="10">'
        f"{max(all_dates).isoformat()}</text>",
    ]
    parts.append(polyline(hist_dates, hist_values, "#888888"))
    parts.append(polyline(fc_dates, fc_values, "#1f5fbf"))
    for d, v in zip(meas_dates, meas_values):
        if not math.isnan(v):
            x, y = xy(d, v)
            parts.append(f'<circle cx="{x}" cy="{y}" r="3.5" fill="#c0392b"/>')
    parts.append("</svg>")
    return "\n".join(p for p in parts if p) + "\n"


def write_forecast_csv(forecast: ForecastResult, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([DATE_COLUMN, *forecast.columns])
        for d, row in zip(forecast.dates, forecast.predictions):
            w.writerow([d.isoformat(), *(format_value(x) for x in row)])


def write_sparse_csv(evaluation: SparseEvaluation | None, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "mse", "mae"])
        if evaluation is not None:
            for row in evaluation.rows:
                w.writerow([row.parameter, format_value(row.mse), format_value(row.mae)])


def emit_report(
    forecast: ForecastResult,
    history: TimeSeriesFrame,
    evaluation: SparseEvaluation | None,
    out_dir: str | Path,
    measured: TimeSeriesFrame | None = None,
    tail_days: int = 80,
) -> list[Path]:
    """Write ``forecast.csv``, ``metrics.csv`` and one SVG per parameter.

    SVGs are skipped for an empty forecast. The history plotted is the last
    ``tail_days`` rows of ``history``. Returns the written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "forecast.csv", out / "metrics.csv"]
    write_forecast_csv(forecast, written[0])
    write_sparse_csv(evaluation, written[1])
    if forecast.horizon == 0:
        return written
    tail = history.tail(tail_days)
    for j, name in enumerate(forecast.columns):
        hv = tail.column(name) if name in tail.columns else np.array([])
        if measured is not None and len(measured):
            md, mv = measured.dates, measured.column(name)
        else:
            md, mv = (), np.array([])
        svg = render_svg(name, tail.dates, hv, forecast.dates, forecast.predictions[:, j], md, mv)
        path = out / f"forecast_{name}.svg"
        path.write_text(svg, encoding="utf-8")
        written.append(path)
    return written
