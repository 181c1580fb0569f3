"""Augmented Dickey-Fuller unit-root test on top of a small QR-based OLS."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from amdcast.errors import ConstantSeries, DimensionMismatch, RankDeficient, TooShort

PIVOT_TOL = 1e-10
MIN_ADF_OBS = 20

# MacKinnon (1994) response surface, constant-only regression, one I(1) series.
_TAU_MAX = 2.74
_TAU_MIN = -18.83
_TAU_STAR = -1.61
_TAU_SMALLP = (2.1659, 1.4412, 0.038269)
_TAU_LARGEP = (1.7339, 0.93202, -0.12745, -0.010368)


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    std_errors: np.ndarray
    residual_variance: float
    dof: int
    residuals: np.ndarray
    ssr: float


def _householder_qr(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR by Householder reflections. Returns ``(Q, R)``."""
    n, k = x.shape
    r = x.copy()
    vs = []
    for j in range(k):
        col = r[j:, j]
        norm = math.sqrt(float(col @ col))
        v = col.copy()
        if norm == 0.0:
            vs.append(None)
            continue
        v[0] += math.copysign(norm, col[0]) if col[0] != 0 else norm
        v /= math.sqrt(float(v @ v))
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        vs.append(v)
    q = np.eye(n, k)
    for j in range(k - 1, -1, -1):
        v = vs[j]
        if v is not None:
            q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])
    return q, np.triu(r[:k, :])


def ols_fit(design: np.ndarray, response: np.ndarray) -> OlsFit:
    """Least squares of ``response`` on the columns of ``design``.

    Standard errors use ``s^2 * diag((X'X)^-1)`` with ``s^2 = SSR / (n - k)``.

    Raises:
        DimensionMismatch: Shapes disagree or there are not more rows than columns.
        RankDeficient: A pivot of R falls below ``1e-10`` relative to the
            column scale.
    """
    x = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64).ravel()
    if x.ndim == 1:
        x = x[:, None]
    n, k = x.shape
    if y.shape[0] != n:
        raise DimensionMismatch(f"design has {n} rows, response has {y.shape[0]}")
    if n <= k:
        raise DimensionMismatch(f"need more rows than regressors ({n} <= {k})")
    col_scale = np.sqrt((x * x).sum(axis=0))
    if np.any(col_scale == 0):
        raise RankDeficient("design has an all-zero column")
    q, r = _householder_qr(x / col_scale)
    diag = np.abs(np.diag(r))
    if np.any(diag < PIVOT_TOL):
        raise RankDeficient(f"design is rank deficient (min pivot {diag.min():.3e})")
    r_inv = np.column_stack([_back_substitute(r, e) for e in np.eye(k)])
    beta_scaled = _back_substitute(r, q.T @ y)
    beta = beta_scaled / col_scale
    resid = y - x @ beta
    ssr = float(resid @ resid)
    dof = n - k
    s2 = ssr / dof
    cov_diag = (r_inv**2).sum(axis=1) / col_scale**2
    return OlsFit(
        coefficients=beta,
        std_errors=np.sqrt(s2 * cov_diag),
        residual_variance=s2,
        dof=dof,
        residuals=resid,
        ssr=ssr,
    )


def _back_substitute(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    k = r.shape[0]
    out = np.zeros(k)
    for i in range(k - 1, -1, -1):
        out[i] = (b[i] - r[i, i + 1 :] @ out[i + 1 :]) / r[i, i]
    return out


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def mackinnon_pvalue(stat: float) -> float:
    """Approximate asymptotic p-value of an ADF t-ratio (constant, no trend).

    Outside the tabulated range the value is clamped to 0.001 / 0.999.
    """
    if stat > _TAU_MAX:
        return 0.999
    if stat < _TAU_MIN:
        return 0.001
    coef = _TAU_SMALLP if stat <= _TAU_STAR else _TAU_LARGEP
    z = sum(c * stat**i for i, c in enumerate(coef))
    return _norm_cdf(z)


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    p_value: float
    lags_used: int
    nobs: int

    @property
    def stationary_at_5pct(self) -> bool:
        return self.p_value < 0.05


def schwert_max_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def _adf_design(y: np.ndarray, lags: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    """Regressors ``[1, y_{t-1}, dy_{t-1..t-lags}]`` for rows ``t >= start``."""
    dy = np.diff(y)
    # dy[t-1] = y[t] - y[t-1]; response rows are t = start..n-1
    idx = np.arange(start, len(y))
    cols = [np.ones(len(idx)), y[idx - 1]]
    for i in range(1, lags + 1):
        cols.append(dy[idx - 1 - i])
    return np.column_stack(cols), dy[idx - 1]


def adf_test(series, max_lag: int | None = None, autolag: bool = True) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant and no trend.

    With ``autolag`` every lag order ``0..max_lag`` is fit on the common
    sample and the order with the lowest AIC is refit on all rows it allows.
    Without it, ``max_lag`` lags are used directly. ``max_lag`` defaults to
    Schwert's rule ``floor(12 * (n / 100) ** 0.25)``.

    Raises:
        ConstantSeries: The series has zero variance.
        TooShort: Fewer than 20 regression rows remain after lag trimming.
    """
    y = np.asarray(series, dtype=np.float64).ravel()
    if y.size and np.ptp(y) == 0:
        raise ConstantSeries("series is constant; ADF is undefined")
    n = y.size
    if max_lag is None:
        max_lag = schwert_max_lag(n)
        # Keep enough rows for the largest model.
        max_lag = max(0, min(max_lag, (n - 1) // 2 - 2))
    if n - 1 - max_lag < MIN_ADF_OBS:
        raise TooShort(f"series of length {n} too short for {max_lag} lags")

    lags = max_lag
    if autolag and max_lag > 0:
        start = max_lag + 1
        best_aic, lags = math.inf, 0
        for p in range(max_lag + 1):
            x, dy = _adf_design(y, p, start)
            fit = ols_fit(x, dy)
            nobs = len(dy)
            aic = nobs * math.log(max(fit.ssr, 1e-300) / nobs) + 2 * x.shape[1]
            if aic < best_aic - 1e-12:
                best_aic, lags = aic, p
    x, dy = _adf_design(y, lags, lags + 1)
    fit = ols_fit(x, dy)
    stat = float(fit.coefficients[1] / fit.std_errors[1])
    return AdfResult(statistic=stat, p_value=mackinnon_pvalue(stat), lags_used=lags, nobs=len(dy))
