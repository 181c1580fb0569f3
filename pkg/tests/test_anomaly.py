import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amdcast.anomaly import (
    EULER_GAMMA,
    anomaly_scores,
    average_path_length,
    build_forest,
    detect,
    expected_path_c,
    flag_count,
)
from amdcast.errors import FeatureMismatch, TooFewPoints


def planted(seed, n=200, d=7, k=5):
    """Standard-normal cluster plus ``k`` points at distance 10 in random directions."""
    r = np.random.default_rng(seed)
    cluster = r.standard_normal((n, d))
    directions = r.standard_normal((k, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return np.vstack([cluster, 10.0 * directions]), np.arange(n, n + k)


def test_c_values():
    assert expected_path_c(1) == 0.0
    assert expected_path_c(2) == pytest.approx(0.15443, abs=1e-4)
    direct = 2.0 * (math.log(255) + EULER_GAMMA) - 2.0 * 255 / 256
    assert expected_path_c(256) == pytest.approx(direct, abs=1e-9)


def test_deterministic():
    x, _ = planted(0)
    a, b = build_forest(x, 100, 64, seed=9), build_forest(x, 100, 64, seed=9)
    np.testing.assert_array_equal(anomaly_scores(a, x), anomaly_scores(b, x))
    assert detect(a, x) == detect(b, x)


def test_identical_pair_is_single_leaf():
    model = build_forest(np.ones((2, 3)), 20, seed=1)
    for tree in model.trees:
        assert tree.node_count == 1
        assert tree.size[0] <= 2


def test_height_limit():
    model = build_forest(np.random.default_rng(0).standard_normal((300, 3)), 10, 64, seed=0)
    assert all(t.height_limit == 6 for t in model.trees)
    assert model.subsample_size == 64


def test_outliers_have_shorter_paths():
    x, idx = planted(1)
    h = average_path_length(build_forest(x, 50, 64, seed=2), x)
    assert h[idx].max() < np.median(h[:200])


def test_planted_points_top_scores():
    x, idx = planted(3)
    scores = anomaly_scores(build_forest(x, 100, 64, seed=3), x)
    assert set(np.argsort(-scores)[:5]) == set(idx)
    assert np.all((scores > 0) & (scores < 1))


def test_score_is_half_at_c_psi():
    model = build_forest(np.random.default_rng(0).standard_normal((100, 2)), 5, 64, seed=0)
    assert 2.0 ** (-expected_path_c(model.subsample_size) / expected_path_c(model.subsample_size)) == 0.5


@pytest.mark.parametrize("n,c,k", [(83, 0.2, 17), (10, 0.2, 2), (200, 0.5, 100), (7, 0.01, 1)])
def test_flag_count(n, c, k):
    assert flag_count(n, c) == k


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 500), st.floats(1e-3, 0.5))
def test_flag_count_is_ceiling(n, c):
    k = flag_count(n, c)
    assert k == min(n, math.ceil(c * n - 1e-9))
    assert k >= 1


def test_pipeline_sized_detection():
    x = np.random.default_rng(4).standard_normal((83, 7))
    assert len(detect(build_forest(x, 100, seed=0, contamination=0.2), x)) == 17


def test_identical_points_flag_lowest_indices():
    x = np.zeros((20, 3))
    assert detect(build_forest(x, 10, seed=0, contamination=0.2), x) == [0, 1, 2, 3]


def test_guards():
    with pytest.raises(TooFewPoints):
        build_forest(np.ones((1, 2)))
    with pytest.raises(ValueError):
        build_forest(np.ones((5, 2)), contamination=0.0)
    model = build_forest(np.random.default_rng(0).standard_normal((10, 2)), 3)
    with pytest.raises(FeatureMismatch):
        anomaly_scores(model, np.ones((2, 3)))
