"""Dense, LSTM and encoder-decoder LSTM forecasters with hand-written backprop.

Parameters of a model live in a flat ``dict[str, np.ndarray]``:

* dense layers: ``<layer>.W`` of shape ``(out, in)`` and ``<layer>.b``
* LSTM cells: ``<cell>.Wf``, ``.Wi``, ``.Wc``, ``.Wo`` of shape
  ``(hidden, hidden + input)`` acting on ``[h_prev, x]``, and biases
  ``.bf``, ``.bi``, ``.bc``, ``.bo``

All forward and backward passes operate on a leading batch axis.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from amdcast.errors import (
    DimensionMismatch,
    EmptyDataset,
    MissingCache,
    VariantMismatch,
)
from amdcast.ingest import SplitSpec, WindowedDataset, chrono_split
from amdcast.mathcore import Activation, activate, activate_grad

logger = logging.getLogger(__name__)

Params = dict[str, np.ndarray]

GATES = ("f", "i", "c", "o")

# Epoch counts reported for each architecture / window pairing; window 0 is
# the covariates-only FNN.
EPOCH_PRESETS: dict[tuple[str, int], int] = {
    ("fnn", 0): 120,
    ("fnn", 7): 80,
    ("fnn", 14): 90,
    ("fnn", 28): 120,
    ("lstm", 7): 125,
    ("lstm", 14): 210,
    ("lstm", 28): 225,
    ("encdec", 7): 200,
    ("encdec", 14): 250,
    ("encdec", 28): 250,
}
REFERENCE_WINDOWS = (7, 14, 28)
OUTPUT_BIAS_INIT = 0.5


class Variant(str, Enum):
    FNN = "fnn"
    LSTM = "lstm"
    ENCDEC = "encdec"


@dataclass(frozen=True)
class ModelSpec:
    variant: Variant
    window: int
    n_features: int = 7
    n_cov: int = 2
    hidden: int = 32
    fnn_hidden: tuple[int, ...] = (64, 32)
    head: tuple[int, ...] = (16,)
    n_outputs: int = 7
    hidden_activation: Activation = Activation.TANH
    output_activation: Activation = Activation.RELU

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "hidden_activation", Activation(self.hidden_activation))
        object.__setattr__(self, "output_activation", Activation(self.output_activation))
        object.__setattr__(self, "fnn_hidden", tuple(self.fnn_hidden))
        object.__setattr__(self, "head", tuple(self.head))
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.variant is not Variant.FNN and self.window < 1:
            raise VariantMismatch(f"{self.variant.value} needs a window of at least 1")

    @property
    def seq_input(self) -> int:
        return self.n_features + self.n_cov

    def dense_layers(self) -> list[tuple[str, int, int, Activation]]:
        """``(name, fan_in, fan_out, activation)`` for every dense layer in order."""
        if self.variant is Variant.FNN:
            widths = self.fnn_hidden
            fan_in = self.window * self.n_features + self.n_cov
        else:
            widths = self.head
            fan_in = self.hidden
        layers = []
        for k, w in enumerate(widths):
            layers.append((f"dense{k}", fan_in, w, self.hidden_activation))
            fan_in = w
        layers.append(("out", fan_in, self.n_outputs, self.output_activation))
        return layers

    def cells(self) -> list[tuple[str, int]]:
        """``(prefix, input size)`` of each LSTM cell."""
        if self.variant is Variant.LSTM:
            return [("lstm", self.seq_input)]
        if self.variant is Variant.ENCDEC:
            return [("enc", self.seq_input), ("dec", self.n_cov)]
        return []

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        d["hidden_activation"] = self.hidden_activation.value
        d["output_activation"] = self.output_activation.value
        d["fnn_hidden"] = list(self.fnn_hidden)
        d["head"] = list(self.head)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


def init_params(spec: ModelSpec, seed: int = 0) -> Params:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` weights, zero biases.

    Forget-gate biases start at 1.0. The output layer's bias starts at
    ``OUTPUT_BIAS_INIT`` (the middle of the [0, 1] target range) so that no
    ReLU output unit begins, and stays, inactive for every sample.
    """
    rng = np.random.default_rng(seed)
    params: Params = {}
    for prefix, n_in in spec.cells():
        fan_in = spec.hidden + n_in
        bound = 1.0 / math.sqrt(fan_in)
        for g in GATES:
            params[f"{prefix}.W{g}"] = rng.uniform(-bound, bound, size=(spec.hidden, fan_in))
        for g in GATES:
            params[f"{prefix}.b{g}"] = np.full(spec.hidden, 1.0 if g == "f" else 0.0)
    for name, fan_in, fan_out, _ in spec.dense_layers():
        bound = 1.0 / math.sqrt(fan_in)
        params[f"{name}.W"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params[f"{name}.b"] = np.full(fan_out, OUTPUT_BIAS_INIT if name == "out" else 0.0)
    return params


# ---------------------------------------------------------------------------
# Dense layers


@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray
    activation: Activation = Activation.IDENTITY


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """``activation(W x + b)`` for a vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    W = np.atleast_2d(np.asarray(layer.W, dtype=np.float64))
    if x.shape[-1] != W.shape[1] or np.shape(layer.b) != (W.shape[0],):
        raise DimensionMismatch(f"dense layer {W.shape} cannot take input of width {x.shape[-1]}")
    return activate(layer.activation, x @ W.T + layer.b)


# ---------------------------------------------------------------------------
# LSTM cell


@dataclass
class LstmCellParams:
    Wf: np.ndarray
    Wi: np.ndarray
    Wc: np.ndarray
    Wo: np.ndarray
    bf: np.ndarray
    bi: np.ndarray
    bc: np.ndarray
    bo: np.ndarray

    @property
    def hidden(self) -> int:
        return self.Wf.shape[0]

    @property
    def input_size(self) -> int:
        return self.Wf.shape[1] - self.Wf.shape[0]

    @classmethod
    def from_params(cls, params: Params, prefix: str) -> "LstmCellParams":
        return cls(**{k: params[f"{prefix}.{k}"] for k in ("Wf", "Wi", "Wc", "Wo", "bf", "bi", "bc", "bo")})


@dataclass
class LstmState:
    """Recurrent state plus the gate activations that produced it.

    ``h`` and ``C`` are the new hidden and cell state. The remaining fields
    are filled by :func:`lstm_cell_forward` and consumed by the backward pass.
    """

    h: np.ndarray
    C: np.ndarray
    hx: np.ndarray | None = None
    f: np.ndarray | None = None
    i: np.ndarray | None = None
    g: np.ndarray | None = None
    o: np.ndarray | None = None
    C_prev: np.ndarray | None = None
    tanh_C: np.ndarray | None = None


def zero_state(hidden: int, batch: int | None = None) -> LstmState:
    shape = (hidden,) if batch is None else (batch, hidden)
    return LstmState(np.zeros(shape), np.zeros(shape))


def lstm_cell_forward(p: LstmCellParams, state: LstmState, x: np.ndarray) -> LstmState:
    h_prev = np.asarray(state.h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if h_prev.shape[-1] != p.hidden or x.shape[-1] != p.input_size:
        raise DimensionMismatch(
            f"cell expects hidden {p.hidden} / input {p.input_size}, "
            f"got {h_prev.shape[-1]} / {x.shape[-1]}"
        )
    hx = np.concatenate([h_prev, x], axis=-1)
    f = activate(Activation.SIGMOID, hx @ p.Wf.T + p.bf)
    i = activate(Activation.SIGMOID, hx @ p.Wi.T + p.bi)
    g = np.tanh(hx @ p.Wc.T + p.bc)
    o = activate(Activation.SIGMOID, hx @ p.Wo.T + p.bo)
    C = f * state.C + i * g
    tanh_C = np.tanh(C)
    return LstmState(h=o * tanh_C, C=C, hx=hx, f=f, i=i, g=g, o=o, C_prev=state.C, tanh_C=tanh_C)


def lstm_sequence_forward(p: LstmCellParams, xs: np.ndarray, init: LstmState) -> list[LstmState]:
    """Unroll over the time axis of ``xs`` (``(batch, T, input)``)."""
    states = []
    state = init
    for t in range(xs.shape[1]):
        state = lstm_cell_forward(p, state, xs[:, t, :])
        states.append(state)
    return states


@dataclass
class LstmGrads:
    params: dict[str, np.ndarray]
    dx: np.ndarray
    dh0: np.ndarray
    dC0: np.ndarray


def lstm_backward(
    p: LstmCellParams,
    states: list[LstmState],
    dh_seq: np.ndarray | None = None,
    dh_last: np.ndarray | None = None,
    dC_last: np.ndarray | None = None,
) -> LstmGrads:
    """Backpropagation through time over a cached unrolled sequence.

    Args:
        p: Cell parameters used in the forward pass.
        states: Output of :func:`lstm_sequence_forward`, one per step.
        dh_seq: Optional ``(batch, T, hidden)`` loss gradient on every h_t.
        dh_last: Optional extra gradient on the final hidden state.
        dC_last: Optional gradient on the final cell state.

    Returns:
        Gradients keyed like :class:`LstmCellParams` fields, per-step input
        gradients ``dx`` of shape ``(batch, T, input)``, and gradients on the
        initial ``h`` and ``C``.

    Raises:
        MissingCache: A state lacks the activations saved by the forward pass.
    """
    if not states:
        raise MissingCache("no cached steps to backpropagate through")
    for s in states:
        if s.hx is None or s.f is None or s.C_prev is None:
            raise MissingCache("state was not produced by lstm_cell_forward")
    H = p.hidden
    batch_shape = states[0].h.shape
    T = len(states)
    grads = {k: np.zeros_like(getattr(p, k)) for k in ("Wf", "Wi", "Wc", "Wo", "bf", "bi", "bc", "bo")}
    dx = np.zeros(batch_shape[:-1] + (T, p.input_size))
    dh = np.zeros(batch_shape) if dh_last is None else np.array(dh_last, dtype=np.float64)
    dC = np.zeros(batch_shape) if dC_last is None else np.array(dC_last, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        s = states[t]
        if dh_seq is not None:
            dh = dh + dh_seq[..., t, :]
        do = dh * s.tanh_C
        dC = dC + dh * s.o * (1.0 - s.tanh_C**2)
        dz = {
            "f": dC * s.C_prev * s.f * (1.0 - s.f),
            "i": dC * s.g * s.i * (1.0 - s.i),
            "c": dC * s.i * (1.0 - s.g**2),
            "o": do * s.o * (1.0 - s.o),
        }
        dhx = np.zeros_like(s.hx)
        hx2 = s.hx.reshape(-1, s.hx.shape[-1])
        for gname, dzg in dz.items():
            W = getattr(p, f"W{gname}")
            dz2 = dzg.reshape(-1, H)
            grads[f"W{gname}"] += dz2.T @ hx2
            grads[f"b{gname}"] += dz2.sum(axis=0)
            dhx += dzg @ W
        dC = dC * s.f
        dh = dhx[..., :H]
        dx[..., t, :] = dhx[..., H:]
    return LstmGrads(grads, dx, dh, dC)


# ---------------------------------------------------------------------------
# Whole-model forward / backward


@dataclass(frozen=True)
class ModelInputs:
    """One batch of model inputs.

    Attributes:
        past: ``(batch, window, features)`` past values.
        past_cov: ``(batch, window, 2)`` time encodings of the past rows.
        target_cov: ``(batch, 2)`` time encoding of the predicted step.
    """

    past: np.ndarray
    past_cov: np.ndarray
    target_cov: np.ndarray

    @classmethod
    def from_dataset(cls, ds: WindowedDataset, idx=None) -> "ModelInputs":
        if idx is None:
            return cls(ds.past, ds.past_cov, ds.target_cov)
        return cls(ds.past[idx], ds.past_cov[idx], ds.target_cov[idx])

    @property
    def batch(self) -> int:
        return self.target_cov.shape[0]


def _check_inputs(spec: ModelSpec, inputs: ModelInputs) -> None:
    b = inputs.batch
    if inputs.past.shape != (b, spec.window, spec.n_features):
        raise DimensionMismatch(
            f"past block {inputs.past.shape} != {(b, spec.window, spec.n_features)}"
        )
    if inputs.past_cov.shape != (b, spec.window, spec.n_cov) or inputs.target_cov.shape != (b, spec.n_cov):
        raise DimensionMismatch("time covariate shapes do not match the model spec")


@dataclass
class ForwardCache:
    dense_in: list[np.ndarray] = field(default_factory=list)
    dense_z: list[np.ndarray] = field(default_factory=list)
    seq: list[LstmState] = field(default_factory=list)
    dec: list[LstmState] = field(default_factory=list)
    seq_input: np.ndarray | None = None


def _dense_stack(spec: ModelSpec, params: Params, a: np.ndarray, cache: ForwardCache) -> np.ndarray:
    for name, _, _, act in spec.dense_layers():
        cache.dense_in.append(a)
        z = a @ params[f"{name}.W"].T + params[f"{name}.b"]
        cache.dense_z.append(z)
        a = activate(act, z)
    return a


def model_forward(spec: ModelSpec, params: Params, inputs: ModelInputs) -> tuple[np.ndarray, ForwardCache]:
    """Predict the next step for every sample in ``inputs``.

    Returns:
        ``(batch, n_outputs)`` predictions and the cache needed by
        :func:`model_backward`.
    """
    _check_inputs(spec, inputs)
    cache = ForwardCache()
    b = inputs.batch
    if spec.variant is Variant.FNN:
        a = np.concatenate([inputs.past.reshape(b, -1), inputs.target_cov], axis=1)
        return _dense_stack(spec, params, a, cache), cache
    xs = np.concatenate([inputs.past, inputs.past_cov], axis=2)
    cache.seq_input = xs
    if spec.variant is Variant.LSTM:
        p = LstmCellParams.from_params(params, "lstm")
        cache.seq = lstm_sequence_forward(p, xs, zero_state(spec.hidden, b))
        return _dense_stack(spec, params, cache.seq[-1].h, cache), cache
    enc = LstmCellParams.from_params(params, "enc")
    dec = LstmCellParams.from_params(params, "dec")
    cache.seq = lstm_sequence_forward(enc, xs, zero_state(spec.hidden, b))
    last = cache.seq[-1]
    cache.dec = lstm_sequence_forward(dec, inputs.target_cov[:, None, :], LstmState(last.h, last.C))
    return _dense_stack(spec, params, cache.dec[-1].h, cache), cache


def predict(spec: ModelSpec, params: Params, inputs: ModelInputs) -> np.ndarray:
    return model_forward(spec, params, inputs)[0]


def model_backward(spec: ModelSpec, params: Params, cache: ForwardCache, dpred: np.ndarray) -> Params:
    """Gradients of a scalar loss w.r.t. every parameter, given dLoss/dpred."""
    grads: Params = {}
    layers = spec.dense_layers()
    if len(cache.dense_in) != len(layers):
        raise MissingCache("forward cache does not match the model's dense layers")
    da = dpred
    for k in range(len(layers) - 1, -1, -1):
        name, _, _, act = layers[k]
        dz = da * activate_grad(act, cache.dense_z[k])
        grads[f"{name}.W"] = dz.T @ cache.dense_in[k]
        grads[f"{name}.b"] = dz.sum(axis=0)
        da = dz @ params[f"{name}.W"]
    if spec.variant is Variant.FNN:
        return grads
    if spec.variant is Variant.LSTM:
        p = LstmCellParams.from_params(params, "lstm")
        g = lstm_backward(p, cache.seq, dh_last=da)
        grads.update({f"lstm.{k}": v for k, v in g.params.items()})
        return grads
    dec = LstmCellParams.from_params(params, "dec")
    enc = LstmCellParams.from_params(params, "enc")
    gd = lstm_backward(dec, cache.dec, dh_last=da)
    ge = lstm_backward(enc, cache.seq, dh_last=gd.dh0, dC_last=gd.dC0)
    grads.update({f"dec.{k}": v for k, v in gd.params.items()})
    grads.update({f"enc.{k}": v for k, v in ge.params.items()})
    return grads


# ---------------------------------------------------------------------------
# Losses and optimiser


def mae_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error and its subgradient (``sign(0) = 0``)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


LOSSES: dict[str, Callable] = {"mae": mae_loss, "mse": mse_loss}


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: Params, grads: Params) -> Params:
    """One bias-corrected Adam update; ``params`` is updated in place and returned."""
    if set(grads) - set(params):
        raise DimensionMismatch(f"gradients for unknown parameters: {sorted(set(grads) - set(params))}")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for name, g in grads.items():
        theta = params[name]
        if g.shape != theta.shape:
            raise DimensionMismatch(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        theta -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def clip_global_norm(grads: Params, max_norm: float) -> float:
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


# ---------------------------------------------------------------------------
# Gradient check


def loss_and_grads(
    spec: ModelSpec, params: Params, inputs: ModelInputs, targets: np.ndarray, loss: str = "mae"
) -> tuple[float, Params]:
    pred, cache = model_forward(spec, params, inputs)
    value, dpred = LOSSES[loss](pred, targets)
    return value, model_backward(spec, params, cache, dpred)


def gradient_check(
    spec: ModelSpec,
    params: Params,
    inputs: ModelInputs,
    targets: np.ndarray,
    h: float = 1e-5,
    loss: str = "mse",
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Relative error is ``|a - f| / max(1e-8, |a| + |f|)`` over every scalar
    parameter.
    """
    if not 1e-6 <= h <= 1e-4:
        raise ValueError("step h must lie in [1e-6, 1e-4]")
    _, analytic = loss_and_grads(spec, params, inputs, targets, loss)
    fn = LOSSES[loss]
    worst = 0.0
    for name, theta in params.items():
        flat = theta.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = fn(predict(spec, params, inputs), targets)[0]
            flat[k] = orig - h
            down = fn(predict(spec, params, inputs), targets)[0]
            flat[k] = orig
            fd = (up - down) / (2.0 * h)
            a = a_flat[k]
            worst = max(worst, abs(a - fd) / max(1e-8, abs(a) + abs(fd)))
    return worst


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 4
    loss: str = "mae"
    split: float = 0.7
    patience: int = 50
    learning_rate: float = 1e-3
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        SplitSpec(self.split)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    restored_best: bool = False
    initial_train_loss: float = math.nan
    initial_val_loss: float = math.nan
    clipped_steps: int = 0

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def best_losses(self) -> tuple[float, float]:
        return self.train_loss[self.best_epoch], self.val_loss[self.best_epoch]


def evaluate_loss(spec: ModelSpec, params: Params, ds: WindowedDataset, loss: str = "mae") -> float:
    return LOSSES[loss](predict(spec, params, ModelInputs.from_dataset(ds)), ds.targets)[0]


def train(
    spec: ModelSpec,
    dataset: WindowedDataset,
    config: TrainConfig,
    params: Params | None = None,
) -> tuple[Params, TrainHistory]:
    """Mini-batch training with Adam, early stopping and best-weight restore.

    The dataset is split chronologically by ``config.split``. Every epoch
    visits the training samples in an order drawn from a generator seeded by
    ``config.seed``; after each epoch the full train and validation losses
    are recorded. Training stops after ``patience`` epochs without a new
    best validation loss, and the weights of the best epoch are returned.

    Raises:
        EmptyDataset: Either partition is empty.
    """
    if params is None:
        params = init_params(spec, config.seed)
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    history = TrainHistory()
    if config.epochs == 0:
        return params, history
    train_ds, val_ds = chrono_split(dataset, SplitSpec(config.split))
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise EmptyDataset("train/validation split left an empty partition")
    if config.batch_size > len(train_ds):
        raise EmptyDataset(f"batch size {config.batch_size} exceeds {len(train_ds)} training samples")
    loss_fn = LOSSES[config.loss]
    history.initial_train_loss = evaluate_loss(spec, params, train_ds, config.loss)
    history.initial_val_loss = evaluate_loss(spec, params, val_ds, config.loss)

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    adam = AdamState(lr=config.learning_rate)
    best = copy.deepcopy(params)
    best_val = math.inf
    stale = 0
    n = len(train_ds)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            pred, cache = model_forward(spec, params, ModelInputs.from_dataset(train_ds, idx))
            _, dpred = loss_fn(pred, train_ds.targets[idx])
            grads = model_backward(spec, params, cache, dpred)
            norm = clip_global_norm(grads, config.clip_norm)
            if norm > config.clip_norm:
                history.clipped_steps += 1
                logger.debug("epoch %d: clipped gradient norm %.3g", epoch, norm)
            adam_step(adam, params, grads)
        tr = evaluate_loss(spec, params, train_ds, config.loss)
        va = evaluate_loss(spec, params, val_ds, config.loss)
        history.train_loss.append(tr)
        history.val_loss.append(va)
        if va < best_val:
            best_val, history.best_epoch, stale = va, epoch, 0
            best = copy.deepcopy(params)
        else:
            stale += 1
            if config.patience > 0 and stale >= config.patience:
                logger.info("early stop after epoch %d (best %d)", epoch, history.best_epoch)
                break
    history.restored_best = True
    return best, history


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_FORMAT = "amdcast-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    spec: ModelSpec,
    params: Params,
    seed: int,
    scaler: dict | None = None,
    extra: dict | None = None,
) -> None:
    """Write a JSON checkpoint; floats use shortest round-trip repr."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": spec.to_dict(),
        "seed": seed,
        "scaler": scaler,
        "extra": extra or {},
        "params": {
            name: {"shape": list(arr.shape), "data": [float(x) for x in arr.reshape(-1)]}
            for name, arr in params.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ModelSpec, Params, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a model checkpoint")
    spec = ModelSpec.from_dict(doc["spec"])
    params = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["params"].items()
    }
    meta = {"seed": doc.get("seed"), "scaler": doc.get("scaler"), "extra": doc.get("extra", {})}
    return spec, params, meta
