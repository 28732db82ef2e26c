"""LSTM cell with explicit forward caching and backpropagation through time.

Gate equations (``*`` is the elementwise product)::

    i = sigmoid(W_i x + U_i h_prev + b_i)
    f = sigmoid(W_f x + U_f h_prev + b_f)
    o = sigmoid(W_o x + U_o h_prev + b_o)
    g = act(W_c x + U_c h_prev + b_c)        act = tanh unless stated otherwise
    c = f * c_prev + i * g
    h = o * tanh(c)

``lstm_forward`` also supports an additive offset on the first hidden state,
``h1 = o1 * tanh(c1) + V``, used to condition a sequence on its attributes.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import DimensionError
from .init import init_glorot_uniform, init_orthogonal, init_uniform
from .rng import Rng
from .tensors import activation, activation_grad, sigmoid

GATES = ("i", "f", "o", "c")
PARAM_NAMES = tuple(f"W_{g}" for g in GATES) + tuple(f"U_{g}" for g in GATES) + tuple(f"b_{g}" for g in GATES)


@dataclass(frozen=True)
class LstmCellParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    U_i: np.ndarray
    U_f: np.ndarray
    U_o: np.ndarray
    U_c: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        d, r = self.W_i.shape
        for f in fields(self):
            arr = getattr(self, f.name)
            want = {"W": (d, r), "U": (d, d), "b": (d,)}[f.name[0]]
            if arr.shape != want:
                raise DimensionError(f"{f.name} has shape {arr.shape}, expected {want}")

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_i.shape[1]

    @classmethod
    def from_params(cls, params: dict, prefix: str = "lstm.") -> "LstmCellParams":
        return cls(**{name: params[prefix + name] for name in PARAM_NAMES})

    def to_params(self, prefix: str = "lstm.") -> dict:
        return {prefix + name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def zeros(cls, hidden: int, inputs: int) -> "LstmCellParams":
        return cls(**{
            name: np.zeros((hidden, inputs) if name[0] == "W" else (hidden, hidden) if name[0] == "U" else hidden)
            for name in PARAM_NAMES
        })


def init_lstm(rng: Rng, hidden: int, inputs: int, input_bound: float | None = None) -> LstmCellParams:
    """Uniform input kernels, orthogonal recurrent kernels, zero biases.

    ``input_bound`` overrides the Glorot bound of the input kernels.
    """
    values = {}
    for g in GATES:
        if input_bound is None:
            values[f"W_{g}"] = init_glorot_uniform(rng.child(f"W_{g}"), hidden, inputs)
        else:
            values[f"W_{g}"] = init_uniform(rng.child(f"W_{g}"), hidden, inputs, input_bound)
        values[f"U_{g}"] = init_orthogonal(rng.child(f"U_{g}"), hidden)
        values[f"b_{g}"] = np.zeros(hidden)
    return LstmCellParams(**values)


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


class Gates(NamedTuple):
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray


class StepCache(NamedTuple):
    x: np.ndarray
    prev: LstmState
    gates: Gates
    c: np.ndarray
    tanh_c: np.ndarray


def zero_state(hidden: int) -> LstmState:
    return LstmState(np.zeros(hidden), np.zeros(hidden))


def lstm_step(p: LstmCellParams, x: np.ndarray, prev: LstmState, candidate: str = "tanh") -> tuple[LstmState, Gates]:
    d = p.hidden_size
    if x.shape != (p.input_size,):
        raise DimensionError(f"input has shape {x.shape}, expected ({p.input_size},)")
    if prev.h.shape != (d,) or prev.c.shape != (d,):
        raise DimensionError(f"state must have length {d}")
    h_prev = prev.h
    i = sigmoid(p.W_i @ x + p.U_i @ h_prev + p.b_i)
    f = sigmoid(p.W_f @ x + p.U_f @ h_prev + p.b_f)
    o = sigmoid(p.W_o @ x + p.U_o @ h_prev + p.b_o)
    g = activation(candidate)(p.W_c @ x + p.U_c @ h_prev + p.b_c)
    c = f * prev.c + i * g
    h = o * np.tanh(c)
    return LstmState(h, c), Gates(i, f, o, g)


def lstm_forward(
    p: LstmCellParams,
    xs: Sequence[np.ndarray],
    initial: LstmState | None = None,
    first_offset: np.ndarray | None = None,
    candidate: str = "tanh",
) -> tuple[list[LstmState], list[StepCache]]:
    """Run the cell over ``xs``; returns per-step states and the BPTT cache."""
    state = initial if initial is not None else zero_state(p.hidden_size)
    if first_offset is not None and first_offset.shape != (p.hidden_size,):
        raise DimensionError(f"offset has shape {first_offset.shape}, expected ({p.hidden_size},)")
    states, cache = [], []
    for t, x in enumerate(xs):
        new, gates = lstm_step(p, x, state, candidate)
        cache.append(StepCache(x, state, gates, new.c, np.tanh(new.c)))
        if t == 0 and first_offset is not None:
            new = LstmState(new.h + first_offset, new.c)
        states.append(new)
        state = new
    return states, cache


@dataclass
class LstmGrads:
    params: dict
    dxs: list
    dh0: np.ndarray
    dc0: np.ndarray
    # total gradient reaching h^(1); equals d(first_offset) when one was used
    dh_first: np.ndarray


def lstm_backward(
    p: LstmCellParams,
    cached_steps: Sequence[StepCache],
    d_h_final: np.ndarray | None = None,
    d_hs: Sequence[np.ndarray | None] | None = None,
    d_c_final: np.ndarray | None = None,
    candidate: str = "tanh",
) -> LstmGrads:
    """Backpropagation through time.

    ``d_h_final`` / ``d_c_final`` are upstream gradients on the last hidden and
    cell state; ``d_hs`` optionally carries a gradient for every step's hidden
    state (``None`` entries are skipped).
    """
    if not cached_steps:
        raise DimensionError("lstm_backward needs at least one cached step")
    d = p.hidden_size
    T = len(cached_steps)
    if d_hs is not None and len(d_hs) != T:
        raise DimensionError(f"d_hs has {len(d_hs)} entries for {T} steps")
    for s in cached_steps:
        if s.x.shape != (p.input_size,) or s.c.shape != (d,):
            raise DimensionError("cached step does not match the cell parameters")

    grads = {name: np.zeros_like(getattr(p, name)) for name in PARAM_NAMES}
    dxs = [None] * T
    dh_next = np.zeros(d) if d_h_final is None else np.array(d_h_final, dtype=np.float64)
    dc_next = np.zeros(d) if d_c_final is None else np.array(d_c_final, dtype=np.float64)
    dh_first = None
    for t in reversed(range(T)):
        s = cached_steps[t]
        i, f, o, g = s.gates
        dh = dh_next
        if d_hs is not None and d_hs[t] is not None:
            dh = dh + d_hs[t]
        if t == 0:
            dh_first = dh.copy()
        do = dh * s.tanh_c
        dc = dc_next + dh * o * (1.0 - s.tanh_c**2)
        da = {
            "i": dc * g * i * (1.0 - i),
            "f": dc * s.prev.c * f * (1.0 - f),
            "o": do * o * (1.0 - o),
            "c": dc * i * activation_grad(candidate, g),
        }
        dx = np.zeros(p.input_size)
        dh_prev = np.zeros(d)
        for gate in GATES:
            a = da[gate]
            grads[f"W_{gate}"] += np.outer(a, s.x)
            grads[f"U_{gate}"] += np.outer(a, s.prev.h)
            grads[f"b_{gate}"] += a
            dx += getattr(p, f"W_{gate}").T @ a
            dh_prev += getattr(p, f"U_{gate}").T @ a
        dxs[t] = dx
        dh_next = dh_prev
        dc_next = dc * f
    return LstmGrads(grads, dxs, dh_next, dc_next, dh_first)
