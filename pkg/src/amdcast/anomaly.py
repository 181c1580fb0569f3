"""Isolation forest outlier detection.

Trees are stored as flat arrays (feature, threshold, children, leaf size) so
scoring a batch of points walks all of them level by level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from amdcast.errors import FeatureMismatch, TooFewPoints

EULER_GAMMA = 0.5772156649


def expected_path_c(n: int) -> float:
    """Average path length of an unsuccessful BST search over ``n`` points.

    ``c(n) = 2 H(n-1) - 2 (n-1) / n`` with ``H(i) ~ ln(i) + gamma``; ``c(1) = 0``.
    """
    if n <= 1:
        return 0.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


@dataclass(frozen=True)
class IsoTree:
    """Flat isolation tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    height_limit: int

    @property
    def node_count(self) -> int:
        return int(self.feature.size)

    def path_lengths(self, points: np.ndarray) -> np.ndarray:
        """Edges traversed plus ``c(leaf size)`` for every row of ``points``."""
        node = np.zeros(points.shape[0], dtype=np.int64)
        depth = np.zeros(points.shape[0])
        active = self.feature[node] >= 0
        rows = np.arange(points.shape[0])
        while active.any():
            idx = rows[active]
            nd = node[idx]
            go_left = points[idx, self.feature[nd]] < self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            depth[idx] += 1.0
            active = self.feature[node] >= 0
        leaf_adjust = np.array([expected_path_c(int(s)) for s in self.size])
        return depth + leaf_adjust[node]


def _build_tree(sample: np.ndarray, height_limit: int, rng: np.random.Generator) -> IsoTree:
    feature, threshold, left, right, size = [], [], [], [], []

    def grow(rows: np.ndarray, depth: int) -> int:
        nid = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(rows.size)
        if depth >= height_limit or rows.size <= 1:
            return nid
        sub = sample[rows]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        candidates = np.flatnonzero(hi > lo)
        if candidates.size == 0:
            return nid
        # Draw the feature among those with nonzero range so the split is proper.
        q = int(candidates[rng.integers(candidates.size)])
        p = rng.uniform(lo[q], hi[q])
        if not lo[q] < p:
            p = np.nextafter(lo[q], hi[q])
        mask = sub[:, q] < p
        feature[nid] = q
        threshold[nid] = p
        l_id = grow(rows[mask], depth + 1)
        r_id = grow(rows[~mask], depth + 1)
        left[nid], right[nid] = l_id, r_id
        return nid

    grow(np.arange(sample.shape[0]), 0)
    return IsoTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        size=np.array(size, dtype=np.int64),
        height_limit=height_limit,
    )


@dataclass(frozen=True)
class IsolationForestModel:
    trees: tuple[IsoTree, ...]
    subsample_size: int
    n_features: int
    contamination: float
    seed: int

    @property
    def tree_count(self) -> int:
        return len(self.trees)


def build_forest(
    points,
    tree_count: int = 100,
    subsample_size: int | None = None,
    seed: int = 0,
    contamination: float = 0.2,
) -> IsolationForestModel:
    """Grow ``tree_count`` isolation trees on subsamples drawn without replacement.

    ``subsample_size`` defaults to ``min(64, n)``; the height limit of every
    tree is ``ceil(log2(subsample_size))``. Each tree gets its own child
    generator spawned from ``seed``.

    Raises:
        TooFewPoints: Fewer than two points were given.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise TooFewPoints(f"isolation forest needs at least 2 points, got {n}")
    if tree_count < 1:
        raise ValueError("tree_count must be >= 1")
    if not 0.0 < contamination <= 0.5:
        raise ValueError(f"contamination must lie in (0, 0.5], got {contamination}")
    psi = min(64, n) if subsample_size is None else min(int(subsample_size), n)
    if psi < 2:
        raise ValueError("subsample size must be >= 2")
    height = math.ceil(math.log2(psi))
    children = np.random.SeedSequence(seed).spawn(tree_count)
    trees = []
    for child in children:
        rng = np.random.default_rng(child)
        rows = rng.choice(n, size=psi, replace=False)
        trees.append(_build_tree(x[rows], height, rng))
    return IsolationForestModel(tuple(trees), psi, x.shape[1], contamination, seed)


def average_path_length(model: IsolationForestModel, points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != model.n_features:
        raise FeatureMismatch(f"model has {model.n_features} features, points have {x.shape[1]}")
    total = np.zeros(x.shape[0])
    for tree in model.trees:
        total += tree.path_lengths(x)
    return total / model.tree_count


def anomaly_scores(model: IsolationForestModel, points) -> np.ndarray:
    """``2 ** (-E[h(x)] / c(psi))``; higher means more anomalous."""
    h = average_path_length(model, points)
    return np.power(2.0, -h / expected_path_c(model.subsample_size))


def flag_count(n: int, contamination: float) -> int:
    return min(n, math.ceil(contamination * n - 1e-9))


def detect(model: IsolationForestModel, points) -> list[int]:
    """Indices of the ``ceil(contamination * n)`` highest scores, ascending.

    Ties go to the lower index.
    """
    scores = anomaly_scores(model, points)
    k = flag_count(scores.size, model.contamination)
    order = np.lexsort((np.arange(scores.size), -scores))
    return sorted(int(i) for i in order[:k])
