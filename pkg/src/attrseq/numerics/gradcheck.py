"""Central finite-difference gradient checking."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ..errors import ConfigError, NumericalError

LossAndGrads = Callable[[dict], tuple[float, dict]]


def numerical_gradient(loss: Callable[[dict], float], params: dict, epsilon: float = 1e-6) -> dict:
    out = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        flat = g.reshape(-1)
        for idx in range(value.size):
            plus = {**params, name: _bump(value, idx, epsilon)}
            minus = {**params, name: _bump(value, idx, -epsilon)}
            lp, lm = loss(plus), loss(minus)
            if not (math.isfinite(lp) and math.isfinite(lm)):
                raise NumericalError(f"non-finite loss while perturbing {name}[{idx}]")
            flat[idx] = (lp - lm) / (2.0 * epsilon)
        out[name] = g
    return out


def _bump(value: np.ndarray, idx: int, delta: float) -> np.ndarray:
    bumped = value.copy()
    bumped.reshape(-1)[idx] += delta
    return bumped


def relative_errors(analytic: dict, numeric: dict) -> dict:
    """Per-parameter max of |a - n| / max(1, |a|, |n|)."""
    out = {}
    for name, n in numeric.items():
        a = analytic[name]
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        out[name] = float(np.max(np.abs(a - n) / denom)) if n.size else 0.0
    return out


def grad_check(f: LossAndGrads, params: dict, epsilon: float = 1e-6) -> float:
    """Max relative error between ``f``'s analytic gradients and central differences.

    ``f`` maps a parameter dict to ``(loss, grads)``.
    """
    if not 0 < epsilon <= 1e-3:
        raise ConfigError(f"epsilon must lie in (0, 1e-3], got {epsilon}")
    value, analytic = f(params)
    if not math.isfinite(value):
        raise NumericalError("loss is not finite at the check point")
    numeric = numerical_gradient(lambda p: f(p)[0], params, epsilon)
    errors = relative_errors(analytic, numeric)
    return max(errors.values(), default=0.0)
