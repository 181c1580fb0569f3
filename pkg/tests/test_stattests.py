import math

import numpy as np
import pytest

from amdcast.errors import ConstantSeries, RankDeficient, TooShort
from amdcast.stattests import adf_test, mackinnon_pvalue, ols_fit, schwert_max_lag

# Reference values from statsmodels 0.14 ``adfuller(x, maxlag=schwert_max_lag(n),
# autolag="AIC", regression="c")`` on the series built by ``_oracle_series``.
ADF_ORACLE = {
    "rw": (-2.317354133484416, 0.16643198865490555, 0, 119),
    "sine": (-6.041552398394893, 1.3422202242505391e-07, 11, 78),
    "lagged": (-3.2954001578501724, 0.015085343801526995, 2, 197),
}
# statsmodels ``mackinnonp(stat, "c", 1)`` inside the tabulated range.
PVALUE_ORACLE = {
    -4.5: 0.0001966399003359905,
    -2.0: 0.28657309916843154,
    -1.0: 0.7532643012005655,
    0.5: 0.9848730963065522,
}


def _oracle_series():
    rng = np.random.default_rng(7)
    return {
        "rw": np.cumsum(rng.standard_normal(120)),
        "sine": np.sin(np.arange(90) / 5) + 0.3 * rng.standard_normal(90),
        "lagged": np.cumsum(np.convolve(rng.standard_normal(210), [1, 0.6, 0.3])[:200]),
    }


@pytest.mark.parametrize("name", sorted(ADF_ORACLE))
def test_adf_matches_reference(name):
    stat, p, lags, nobs = ADF_ORACLE[name]
    r = adf_test(_oracle_series()[name])
    assert r.statistic == pytest.approx(stat, rel=1e-10)
    assert r.p_value == pytest.approx(p, rel=1e-8)
    assert r.lags_used == lags
    assert r.nobs == nobs


@pytest.mark.parametrize("stat", sorted(PVALUE_ORACLE))
def test_pvalue_surface(stat):
    assert mackinnon_pvalue(stat) == pytest.approx(PVALUE_ORACLE[stat], rel=1e-10)


def test_pvalue_clamped():
    assert mackinnon_pvalue(3.0) == 0.999
    assert mackinnon_pvalue(-25.0) == 0.001


def test_pvalue_monotone():
    stats = np.linspace(-18, 2.7, 400)
    p = [mackinnon_pvalue(s) for s in stats]
    assert all(b >= a - 1e-15 for a, b in zip(p, p[1:]))


def test_schwert():
    assert schwert_max_lag(100) == 12
    assert schwert_max_lag(83) == 11
    assert schwert_max_lag(300) == 15


def test_random_walk_not_rejected():
    y = np.cumsum(np.random.default_rng(42).standard_normal(300))
    assert adf_test(y).p_value > 0.05


def test_white_noise_rejected():
    y = np.random.default_rng(42).standard_normal(300)
    assert adf_test(y).p_value < 0.01


def test_constant_series():
    with pytest.raises(ConstantSeries):
        adf_test([3.0] * 50)


def test_too_short():
    with pytest.raises(TooShort):
        adf_test(np.arange(10.0) ** 1.5)


def test_stationary_flag_follows_pvalue():
    r = adf_test(np.random.default_rng(3).standard_normal(100))
    assert r.stationary_at_5pct == (r.p_value < 0.05)


@pytest.mark.parametrize("a,c", [(3.0, -7.0), (1e-3, 100.0), (250.0, 0.5)])
def test_affine_invariance(a, c):
    y = np.cumsum(np.random.default_rng(11).standard_normal(150))
    base = adf_test(y)
    moved = adf_test(a * y + c)
    assert moved.lags_used == base.lags_used
    assert abs(moved.statistic - base.statistic) <= 1e-9


def test_ols_exact_fit():
    x = np.arange(1.0, 11.0)[:, None]
    fit = ols_fit(x, 2 * x[:, 0])
    assert fit.coefficients[0] == pytest.approx(2.0, abs=1e-12)
    assert fit.residual_variance == pytest.approx(0.0, abs=1e-20)


def test_ols_rank_deficient():
    x = np.random.default_rng(0).standard_normal((20, 2))
    with pytest.raises(RankDeficient):
        ols_fit(np.column_stack([x, x[:, 0]]), x[:, 1])


def test_ols_matches_normal_equations(rng):
    x = rng.standard_normal((60, 4))
    y = x @ [1.0, -2.0, 0.5, 3.0] + rng.standard_normal(60)
    fit = ols_fit(x, y)
    beta = np.linalg.solve(x.T @ x, x.T @ y)
    np.testing.assert_allclose(fit.coefficients, beta, atol=1e-8)
    resid = y - x @ beta
    s2 = resid @ resid / (60 - 4)
    np.testing.assert_allclose(fit.std_errors, np.sqrt(s2 * np.diag(np.linalg.inv(x.T @ x))), rtol=1e-8)
    assert fit.dof == 56
    np.testing.assert_allclose(x.T @ fit.residuals, 0.0, atol=1e-8)
