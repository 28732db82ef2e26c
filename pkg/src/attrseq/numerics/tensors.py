"""Dense float64 vectors/matrices, activations and fully connected layers.

Vectors and matrices are plain ``numpy.ndarray`` objects of dtype float64.
The constructors here only add validation (shape and finiteness).
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from ..errors import DimensionError, NumericalError

SIGMOID_CLAMP = 500.0


def vector(data) -> np.ndarray:
    v = np.array(data, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NumericalError("vector contains NaN or Inf")
    return v


def matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    m = np.array(data, dtype=np.float64)
    if m.ndim == 1 and m.size == 0 and rows is not None and cols is not None:
        m = m.reshape(rows, cols)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows or cols is not None and m.shape[1] != cols:
        raise DimensionError(f"expected {rows}x{cols}, got {m.shape[0]}x{m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise NumericalError("matrix contains NaN or Inf")
    return m


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.float64)


def zeros(rows: int, cols: int | None = None) -> np.ndarray:
    if cols is None:
        return np.zeros(rows, dtype=np.float64)
    return np.zeros((rows, cols), dtype=np.float64)


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise DimensionError(f"cannot multiply {m.shape} by {v.shape}")
    return m @ v


def sigmoid(v: np.ndarray) -> np.ndarray:
    z = np.clip(v, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


def relu(v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0.0)


def tanh_act(v: np.ndarray) -> np.ndarray:
    return np.tanh(v)


def softmax(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise DimensionError("softmax of an empty vector")
    e = np.exp(v - np.max(v))
    return e / e.sum()


def log_softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - np.max(v)
    return shifted - np.log(np.exp(shifted).sum())


# Derivatives are written in terms of the activation output, except relu,
# whose derivative needs the sign of the input (output > 0 is equivalent).
_ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "sigmoid": (sigmoid, lambda y: y * (1.0 - y)),
    "tanh": (tanh_act, lambda y: 1.0 - y * y),
    "relu": (relu, lambda y: (y > 0.0).astype(np.float64)),
    "linear": (lambda z: z, lambda y: np.ones_like(y)),
}


def activation(name: str) -> Callable[[np.ndarray], np.ndarray]:
    try:
        return _ACTIVATIONS[name][0]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


def activation_grad(name: str, y: np.ndarray) -> np.ndarray:
    """Derivative of activation ``name`` evaluated from its output ``y``."""
    return _ACTIVATIONS[name][1](y)


class DenseCache(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    act: str


def dense_forward(W: np.ndarray, b: np.ndarray, x: np.ndarray, act: str) -> tuple[np.ndarray, DenseCache]:
    y = activation(act)(matvec(W, x) + b)
    return y, DenseCache(x, y, act)


def dense_backward(W: np.ndarray, cache: DenseCache, dy: np.ndarray):
    """Return ``(dW, db, dx)`` for one layer given the upstream gradient."""
    dz = dy * activation_grad(cache.act, cache.y)
    return np.outer(dz, cache.x), dz, W.T @ dz


def stack_forward(params: dict, prefix: str, n_layers: int, x: np.ndarray, acts):
    """Run ``n_layers`` dense layers named ``{prefix}{k}.W`` / ``{prefix}{k}.b``."""
    if isinstance(acts, str):
        acts = [acts] * n_layers
    caches = []
    for k in range(n_layers):
        W = params[f"{prefix}{k}.W"]
        if W.shape[1] != x.shape[0]:
            raise DimensionError(f"layer {prefix}{k} expects width {W.shape[1]}, got {x.shape[0]}")
        x, cache = dense_forward(W, params[f"{prefix}{k}.b"], x, acts[k])
        caches.append(cache)
    return x, caches


def stack_backward(params: dict, prefix: str, caches, dy: np.ndarray, grads: dict) -> np.ndarray:
    """Accumulate layer gradients into ``grads`` and return d(input)."""
    for k in reversed(range(len(caches))):
        dW, db, dy = dense_backward(params[f"{prefix}{k}.W"], caches[k], dy)
        grads[f"{prefix}{k}.W"] += dW
        grads[f"{prefix}{k}.b"] += db
    return dy


def zeros_like_params(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}
