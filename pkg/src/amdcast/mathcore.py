"""Dense float64 matrices and elementwise activations.

Everything numeric in the package runs on plain ``numpy.ndarray`` values.
``as_matrix`` is the single entry point that enforces the storage contract
(2-D, float64, row-major, finite), and the activation helpers are shared by
the dense and recurrent layers.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from amdcast.errors import DimensionMismatch, NonFiniteValue


class Activation(str, Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"
    IDENTITY = "identity"


def as_matrix(data, *, allow_vector: bool = False) -> np.ndarray:
    """Validate ``data`` and return it as a C-contiguous float64 array.

    Args:
        data: Anything ``numpy.asarray`` accepts.
        allow_vector: Keep 1-D input as-is instead of promoting it to a
            single-row matrix.

    Raises:
        NonFiniteValue: If any entry is NaN or infinite.
        DimensionMismatch: If the input has more than two dimensions.
    """
    arr = np.array(data, dtype=np.float64, order="C", copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1 and not allow_vector:
        arr = arr.reshape(1, -1)
    elif arr.ndim > 2:
        raise DimensionMismatch(f"expected at most 2 dimensions, got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("matrix payload contains NaN or Inf")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(v: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(v, dtype=np.float64)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def activate(kind: Activation | str, v: np.ndarray) -> np.ndarray:
    """Apply ``kind`` elementwise to ``v``."""
    kind = Activation(kind)
    v = np.asarray(v, dtype=np.float64)
    if kind is Activation.SIGMOID:
        return sigmoid(v)
    if kind is Activation.TANH:
        return np.tanh(v)
    if kind is Activation.RELU:
        return np.maximum(v, 0.0)
    return v.copy()


def activate_grad(kind: Activation | str, v: np.ndarray) -> np.ndarray:
    """Derivative of ``activate(kind, .)`` evaluated at ``v``.

    The ReLU derivative at exactly zero is taken to be 0.
    """
    kind = Activation(kind)
    v = np.asarray(v, dtype=np.float64)
    if kind is Activation.SIGMOID:
        s = sigmoid(v)
        return s * (1.0 - s)
    if kind is Activation.TANH:
        t = np.tanh(v)
        return 1.0 - t * t
    if kind is Activation.RELU:
        return (v > 0).astype(np.float64)
    return np.ones_like(v)
