"""Regression trees, forests, gradient boosting and predictive interpolation.

Four ensemble presets drive the interpolation of the weekly series onto a
daily grid:

* ``random_forest``  bootstrap rows, ``ceil(sqrt(d))`` features per split
* ``extra_trees``    all rows, one uniform random threshold per feature
* ``gbm_depthwise``  boosted depth-limited trees (XGBoost-style growth)
* ``gbm_leafwise``   boosted best-first trees capped by leaf count
  (LightGBM-style growth)
"""

from __future__ import annotations

import datetime as dt
import heapq
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from amdcast.errors import TooFewSamples
from amdcast.ingest import TimeSeriesFrame, cyclic_encode, fit_scaler, split_count

logger = logging.getLogger(__name__)

_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class CartTree:
    """Flat binary regression tree; ``feature == -1`` marks a leaf.

    ``value`` holds the mean training target routed to each node, so for
    leaves it is the prediction.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.feature.size)

    @property
    def leaf_count(self) -> int:
        return int((self.feature < 0).sum())

    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            idx = rows[active]
            nd = node[idx]
            go_left = x[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]


@dataclass
class _Split:
    gain: float
    feature: int
    threshold: float
    mask: np.ndarray


def _best_split(
    x: np.ndarray,
    y: np.ndarray,
    min_leaf: int,
    features: np.ndarray,
    random_thresholds: bool,
    rng: np.random.Generator,
) -> _Split | None:
    n = y.size
    total = y.sum()
    base = total * total / n
    best: _Split | None = None
    for f in features:
        col = x[:, f]
        if random_thresholds:
            lo, hi = col.min(), col.max()
            if not lo < hi:
                continue
            t = rng.uniform(lo, hi)
            mask = col <= t
            n_l = int(mask.sum())
            if n_l < min_leaf or n - n_l < min_leaf:
                continue
            s_l = y[mask].sum()
            gain = s_l * s_l / n_l + (total - s_l) ** 2 / (n - n_l) - base
            if best is None or gain > best.gain:
                best = _Split(gain, int(f), float(t), mask)
            continue
        order = np.argsort(col, kind="stable")
        xs, ys = col[order], y[order]
        csum = np.cumsum(ys)[:-1]
        n_l = np.arange(1, n)
        valid = (xs[:-1] < xs[1:]) & (n_l >= min_leaf) & (n - n_l >= min_leaf)
        if not valid.any():
            continue
        gains = csum * csum / n_l + (total - csum) ** 2 / (n - n_l) - base
        gains = np.where(valid, gains, -np.inf)
        i = int(np.argmax(gains))
        if best is None or gains[i] > best.gain:
            t = 0.5 * (xs[i] + xs[i + 1])
            if not t < xs[i + 1]:
                t = xs[i]
            best = _Split(float(gains[i]), int(f), float(t), col <= t)
    if best is None or best.gain <= _MIN_GAIN * max(1.0, float(y @ y)):
        return None
    return best


class _TreeBuilder:
    def __init__(self, x, y, max_depth, min_leaf, max_features, random_thresholds, rng):
        self.x, self.y = x, y
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.random_thresholds = random_thresholds
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.n_samples: list[int] = []

    def _new_node(self, rows: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(self.y[rows].mean()))
        self.n_samples.append(int(rows.size))
        return len(self.feature) - 1

    def _candidate(self, rows: np.ndarray, depth: int) -> _Split | None:
        if self.max_depth is not None and depth >= self.max_depth:
            return None
        if rows.size < 2 * self.min_leaf:
            return None
        y = self.y[rows]
        if np.ptp(y) == 0:
            return None
        d = self.x.shape[1]
        if self.max_features is None or self.max_features >= d:
            features = np.arange(d)
        else:
            features = np.sort(self.rng.choice(d, size=self.max_features, replace=False))
        return _best_split(self.x[rows], y, self.min_leaf, features, self.random_thresholds, self.rng)

    def _apply(self, nid: int, rows: np.ndarray, split: _Split) -> tuple[int, np.ndarray, int, np.ndarray]:
        l_rows, r_rows = rows[split.mask], rows[~split.mask]
        self.feature[nid] = split.feature
        self.threshold[nid] = split.threshold
        l_id = self._new_node(l_rows)
        r_id = self._new_node(r_rows)
        self.left[nid], self.right[nid] = l_id, r_id
        return l_id, l_rows, r_id, r_rows

    def grow_depthwise(self) -> None:
        def grow(nid: int, rows: np.ndarray, depth: int) -> None:
            split = self._candidate(rows, depth)
            if split is None:
                return
            l_id, l_rows, r_id, r_rows = self._apply(nid, rows, split)
            grow(l_id, l_rows, depth + 1)
            grow(r_id, r_rows, depth + 1)

        rows = np.arange(self.y.size)
        grow(self._new_node(rows), rows, 0)

    def grow_leafwise(self, max_leaves: int) -> None:
        rows = np.arange(self.y.size)
        heap: list = []
        counter = 0

        def push(nid: int, rows: np.ndarray, depth: int) -> None:
            nonlocal counter
            split = self._candidate(rows, depth)
            if split is not None:
                heapq.heappush(heap, (-split.gain, counter, nid, rows, depth, split))
                counter += 1

        push(self._new_node(rows), rows, 0)
        leaves = 1
        while heap and leaves < max_leaves:
            _, _, nid, rows, depth, split = heapq.heappop(heap)
            l_id, l_rows, r_id, r_rows = self._apply(nid, rows, split)
            leaves += 1
            push(l_id, l_rows, depth + 1)
            push(r_id, r_rows, depth + 1)

    def finish(self) -> CartTree:
        return CartTree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            value=np.array(self.value),
            n_samples=np.array(self.n_samples, dtype=np.int64),
        )


def _check_xy(features, targets, min_leaf: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(targets, dtype=np.float64).ravel()
    if x.shape[0] != y.size:
        raise ValueError(f"{x.shape[0]} feature rows but {y.size} targets")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    if y.size < 2 * min_leaf:
        raise TooFewSamples(f"need at least {2 * min_leaf} samples, got {y.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")
    return x, y


def fit_cart(
    features,
    targets,
    max_depth: int | None = None,
    min_leaf: int = 1,
    max_features: int | None = None,
    random_thresholds: bool = False,
    seed: int | np.random.SeedSequence | None = 0,
    max_leaves: int | None = None,
) -> CartTree:
    """Grow a squared-error regression tree.

    Splits maximise the reduction in squared error. Growth stops at
    ``max_depth``, when a child would hold fewer than ``min_leaf`` rows, or
    when the node's targets are constant. With ``max_leaves`` the tree is
    grown best-first until it has that many leaves.

    Raises:
        TooFewSamples: Fewer than ``2 * min_leaf`` rows.
    """
    x, y = _check_xy(features, targets, min_leaf)
    builder = _TreeBuilder(x, y, max_depth, min_leaf, max_features, random_thresholds, np.random.default_rng(seed))
    if max_leaves is None:
        builder.grow_depthwise()
    else:
        builder.grow_leafwise(max_leaves)
    return builder.finish()


class ForestMode(str, Enum):
    RANDOM_FOREST = "random_forest"
    EXTRA_TREES = "extra_trees"


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[CartTree, ...]
    mode: ForestMode
    max_depth: int | None
    min_leaf: int
    seed: int

    @property
    def tree_count(self) -> int:
        return len(self.trees)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        return np.mean([t.predict(x) for t in self.trees], axis=0)


def fit_forest(
    features,
    targets,
    mode: ForestMode | str = ForestMode.RANDOM_FOREST,
    n_trees: int = 200,
    max_depth: int | None = None,
    min_leaf: int = 2,
    max_features: int | str | None = "auto",
    bootstrap: bool | None = None,
    seed: int = 0,
) -> ForestModel:
    """Average of independently grown trees.

    Random forests draw a bootstrap sample per tree and consider
    ``ceil(sqrt(d))`` features at each split; extra-trees use all rows,
    all features, and a single random threshold per feature. ``"auto"``
    picks the mode's feature rule; ``None`` means all features.
    """
    mode = ForestMode(mode)
    x, y = _check_xy(features, targets, min_leaf)
    d = x.shape[1]
    if max_features == "auto":
        max_features = math.ceil(math.sqrt(d)) if mode is ForestMode.RANDOM_FOREST else None
    if bootstrap is None:
        bootstrap = mode is ForestMode.RANDOM_FOREST
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        if bootstrap:
            rows = rng.integers(0, y.size, size=y.size)
            xt, yt = x[rows], y[rows]
        else:
            xt, yt = x, y
        if yt.size < 2 * min_leaf:
            xt, yt = x, y
        builder = _TreeBuilder(
            xt, yt, max_depth, min_leaf, max_features, mode is ForestMode.EXTRA_TREES, rng
        )
        builder.grow_depthwise()
        trees.append(builder.finish())
    return ForestModel(tuple(trees), mode, max_depth, min_leaf, seed)


class Growth(str, Enum):
    DEPTHWISE = "depthwise"
    LEAFWISE = "leafwise"


@dataclass(frozen=True)
class GbmModel:
    base: float
    stages: tuple[CartTree, ...]
    learning_rate: float
    growth: Growth
    seed: int
    train_losses: tuple[float, ...] = ()

    @property
    def stage_count(self) -> int:
        return len(self.stages)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        out = np.full(x.shape[0], self.base)
        for tree in self.stages:
            out += self.learning_rate * tree.predict(x)
        return out


def fit_gbm(
    features,
    targets,
    growth: Growth | str = Growth.DEPTHWISE,
    learning_rate: float = 0.1,
    n_stages: int = 200,
    max_depth: int | None = 3,
    max_leaves: int = 8,
    min_leaf: int = 2,
    seed: int = 0,
) -> GbmModel:
    """Squared-error gradient boosting.

    Starts from the target mean; stage ``t`` fits a tree to the residuals
    ``y - F_{t-1}(x)`` and adds it scaled by ``learning_rate``. Depth-wise
    growth caps depth (``max_depth``); leaf-wise growth expands the best
    leaf first up to ``max_leaves`` and ignores ``max_depth``.
    ``train_losses[t]`` is the training MSE after ``t`` stages.
    """
    growth = Growth(growth)
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must lie in (0, 1]")
    x, y = _check_xy(features, targets, min_leaf)
    base = float(y.mean())
    pred = np.full(y.size, base)
    losses = [float(np.mean((y - pred) ** 2))]
    stages = []
    for child in np.random.SeedSequence(seed).spawn(n_stages):
        resid = y - pred
        if growth is Growth.DEPTHWISE:
            tree = fit_cart(x, resid, max_depth=max_depth, min_leaf=min_leaf, seed=child)
        else:
            tree = fit_cart(x, resid, min_leaf=min_leaf, seed=child, max_leaves=max_leaves)
        pred = pred + learning_rate * tree.predict(x)
        stages.append(tree)
        losses.append(float(np.mean((y - pred) ** 2)))
    return GbmModel(base, tuple(stages), learning_rate, growth, seed, tuple(losses))


PRESETS: tuple[str, ...] = ("random_forest", "extra_trees", "gbm_depthwise", "gbm_leafwise")
MN_PRESETS: tuple[str, ...] = ("random_forest", "gbm_depthwise", "extra_trees")
INTERP_FEATURES: tuple[str, ...] = ("sin", "cos", "day_index")


@dataclass(frozen=True)
class InterpolationSettings:
    split: float = 0.8
    n_trees: int = 200
    n_stages: int = 200
    learning_rate: float = 0.1
    min_leaf: int = 2
    gbm_max_depth: int = 3
    gbm_max_leaves: int = 8
    top_k: int = 3
    presets: tuple[str, ...] = PRESETS


def fit_preset(name: str, x: np.ndarray, y: np.ndarray, settings: InterpolationSettings, seed: int):
    if name == "random_forest":
        return fit_forest(x, y, "random_forest", settings.n_trees, min_leaf=settings.min_leaf, seed=seed)
    if name == "extra_trees":
        return fit_forest(x, y, "extra_trees", settings.n_trees, min_leaf=settings.min_leaf, seed=seed)
    if name == "gbm_depthwise":
        return fit_gbm(
            x, y, "depthwise", settings.learning_rate, settings.n_stages,
            max_depth=settings.gbm_max_depth, min_leaf=settings.min_leaf, seed=seed,
        )
    if name == "gbm_leafwise":
        return fit_gbm(
            x, y, "leafwise", settings.learning_rate, settings.n_stages,
            max_leaves=settings.gbm_max_leaves, min_leaf=settings.min_leaf, seed=seed,
        )
    raise ValueError(f"unknown preset {name!r}")


@dataclass(frozen=True)
class ModelScore:
    parameter: str
    model: str
    mse: float
    mae: float
    rank: int
    chosen: bool


@dataclass(frozen=True)
class InterpolationPlan:
    """Per-parameter ranking and the presets whose predictions were averaged."""

    ranking: dict[str, tuple[str, ...]]
    chosen: dict[str, tuple[str, ...]]
    features: tuple[str, ...] = INTERP_FEATURES
    unit_space: str = "scaled_0_1"
    notes: tuple[str, ...] = field(default=())


def interp_features(dates, origin: dt.date) -> np.ndarray:
    s, c = cyclic_encode(dates)
    idx = np.array([(d - origin).days for d in dates], dtype=np.float64)
    return np.column_stack([s, c, idx])


def daily_grid(start: dt.date, end: dt.date) -> tuple[dt.date, ...]:
    return tuple(start + dt.timedelta(days=i) for i in range((end - start).days + 1))


def interpolate(
    frame: TimeSeriesFrame,
    settings: InterpolationSettings | None = None,
    seed: int = 0,
) -> tuple[TimeSeriesFrame, InterpolationPlan, list[ModelScore]]:
    """Fill a daily grid spanning ``frame`` with tree-ensemble predictions.

    For each parameter, every preset is trained on the first 80% of the
    observed rows (chronologically, on [0, 1]-scaled values) and scored on
    the remaining 20%. The daily series is the mean of the best three
    presets refit on all observed rows; Mn always uses random forest,
    depth-wise boosting and extra-trees. Observed cells are copied to their
    own dates unchanged, and predictions are clipped to the observed range.

    Raises:
        TooFewSamples: A parameter has fewer than 20 observed rows.
    """
    settings = settings or InterpolationSettings()
    scaler = fit_scaler(frame)
    scaled = scaler.transform(frame.values)
    origin = frame.dates[0]
    grid = daily_grid(frame.dates[0], frame.dates[-1])
    grid_x = interp_features(grid, origin)
    obs_x = interp_features(frame.dates, origin)
    grid_pos = {d: i for i, d in enumerate(grid)}

    out_scaled = np.empty((len(grid), len(frame.columns)))
    ranking: dict[str, tuple[str, ...]] = {}
    chosen: dict[str, tuple[str, ...]] = {}
    scores: list[ModelScore] = []
    seeds = np.random.SeedSequence(seed).generate_state(len(frame.columns) * len(settings.presets))

    for j, name in enumerate(frame.columns):
        observed = ~np.isnan(scaled[:, j])
        n_obs = int(observed.sum())
        if n_obs < 20:
            raise TooFewSamples(f"{name} has {n_obs} observed rows; need at least 20")
        x_all, y_all = obs_x[observed], scaled[observed, j]
        k = split_count(n_obs, settings.split)
        per_model = {}
        for m, preset in enumerate(settings.presets):
            model_seed = int(seeds[j * len(settings.presets) + m])
            model = fit_preset(preset, x_all[:k], y_all[:k], settings, model_seed)
            pred = model.predict(x_all[k:])
            resid = y_all[k:] - pred
            per_model[preset] = (float(np.mean(resid**2)), float(np.mean(np.abs(resid))), model_seed)
        order = sorted(settings.presets, key=lambda p: (per_model[p][0], settings.presets.index(p)))
        top = tuple(order[: settings.top_k])
        if name == "Mn" and all(p in settings.presets for p in MN_PRESETS):
            top = MN_PRESETS
        ranking[name], chosen[name] = tuple(order), top
        for rank, preset in enumerate(order, start=1):
            mse, mae, _ = per_model[preset]
            scores.append(ModelScore(name, preset, mse, mae, rank, preset in top))

        preds = [fit_preset(p, x_all, y_all, settings, per_model[p][2]).predict(grid_x) for p in top]
        col = np.clip(np.mean(preds, axis=0), y_all.min(), y_all.max())
        out_scaled[:, j] = col
        logger.debug("interpolated %s with %s", name, ", ".join(top))

    raw = scaler.inverse(out_scaled)
    lo = np.nanmin(frame.values, axis=0)
    hi = np.nanmax(frame.values, axis=0)
    raw = np.clip(raw, lo, hi)
    for i, d in enumerate(frame.dates):
        row = frame.values[i]
        keep = ~np.isnan(row)
        raw[grid_pos[d], keep] = row[keep]

    plan = InterpolationPlan(
        ranking,
        chosen,
        notes=("linear day index added to sin/cos features so models can express trend",),
    )
    return TimeSeriesFrame(grid, raw, frame.columns), plan, scores
