"""Weight initializers."""

from __future__ import annotations

import math

import numpy as np

from .rng import Rng


def init_uniform(rng: Rng, rows: int, cols: int, bound: float) -> np.ndarray:
    if rows == 0 or cols == 0:
        return np.zeros((rows, cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def glorot_bound(rows: int, cols: int) -> float:
    return math.sqrt(6.0) / math.sqrt(rows + cols) if rows + cols else 0.0


def init_glorot_uniform(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """Uniform in +/- sqrt(6) / sqrt(fan_in + fan_out)."""
    return init_uniform(rng, rows, cols, glorot_bound(rows, cols))


def init_orthogonal(rng: Rng, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros((0, 0))
    a = rng.normal(size=(n, n))
    q, r = np.linalg.qr(a)
    # sign fix makes the result unique for a given draw
    q = q * np.sign(np.where(np.diag(r) == 0.0, 1.0, np.diag(r)))
    return q
