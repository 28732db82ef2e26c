"""Parameter updates over ``{name: ndarray}`` dictionaries.

Both optimizers are pure: they return new dictionaries and never modify the
arrays they receive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DimensionError


def _check_shapes(params: dict, grads: dict) -> None:
    for name, value in params.items():
        if name in grads and grads[name].shape != value.shape:
            raise DimensionError(f"gradient for {name} has shape {grads[name].shape}, expected {value.shape}")


def sgd_update(params: dict, grads: dict, learning_rate: float) -> dict:
    """theta <- theta - learning_rate * grad; parameters without a gradient are kept."""
    if learning_rate < 0:
        raise ConfigError(f"learning rate must be non-negative, got {learning_rate}")
    _check_shapes(params, grads)
    return {k: v - learning_rate * grads[k] if k in grads else v for k, v in params.items()}


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_update(
    state: AdamState,
    params: dict,
    grads: dict,
    rho: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: int | None = None,
) -> tuple[AdamState, dict]:
    """One Adam step with bias-corrected moments.

    The step is ``rho / sqrt(v_hat + eps) * m_hat`` (``eps`` sits inside the
    square root). ``t`` defaults to ``state.t + 1``.
    """
    if rho <= 0:
        raise ConfigError(f"rho must be positive, got {rho}")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ConfigError("beta1 and beta2 must lie in [0, 1)")
    t = state.t + 1 if t is None else t
    if t < 1:
        raise ConfigError(f"step index must be >= 1, got {t}")
    _check_shapes(params, grads)
    m_new, v_new, out = dict(state.m), dict(state.v), {}
    for name, value in params.items():
        if name not in grads:
            out[name] = value
            continue
        g = grads[name]
        m = beta1 * state.m.get(name, np.zeros_like(value)) + (1.0 - beta1) * g
        v = beta2 * state.v.get(name, np.zeros_like(value)) + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        out[name] = value - rho / np.sqrt(v_hat + eps) * m_hat
        m_new[name], v_new[name] = m, v
    return AdamState(m_new, v_new, t), out
