"""Attention-based classification of attributed sequences.

Components: a tanh attribute layer ``r = tanh(W_r v + b_r)``, an LSTM over the
items, and a classification head. Three variants feed the head:

* ``none``: ``r ++ h_T``
* ``asa``: ``r ++ alpha_T`` with ``alpha_t = mu_t * h_t``
* ``asha``: ``alpha_T`` with ``alpha_t = mu_t * (r ++ h_t)``

Attention weights ``mu`` are a softmax over time steps, taken separately for
every coordinate (or, in scalar-score mode, over the per-step sums). Only
the real steps of a sequence are visited, so padding never receives weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .data import AttributedSequence, Dataset, one_hot_steps
from .errors import ConfigError, DimensionError, EmptySequenceError, NumericalError
from .numerics import (
    AdamState,
    LstmCellParams,
    Rng,
    adam_update,
    init_glorot_uniform,
    init_lstm,
    log_softmax,
    lstm_backward,
    lstm_forward,
    sigmoid,
    softmax,
)

VARIANTS = ("none", "asa", "asha")
ATT_DROPOUT = 0.5
HEAD_DROPOUT = 0.2


@dataclass(frozen=True)
class AmasModel:
    u: int
    r: int
    att_width: int
    lstm_width: int
    classes: tuple[str, ...]
    variant: str
    params: dict = field(repr=False)
    head: str = "softmax"  # or "sigmoid" (two classes, one logit)
    scalar_scores: bool = False
    l2: float = 1e-4

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def head_width(self) -> int:
        return self.att_width + self.lstm_width

    def class_index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise ConfigError(f"label {label!r} is not one of the model classes") from None

    def hyperparameters(self) -> dict:
        return {"u": self.u, "r": self.r, "att_width": self.att_width, "lstm_width": self.lstm_width,
                "classes": list(self.classes), "variant": self.variant, "head": self.head,
                "scalar_scores": self.scalar_scores, "l2": self.l2}


def init_amas(rng: Rng, u: int, r: int, classes: Sequence[str], variant: str = "asha", att_width: int = 16,
              lstm_width: int = 16, head: str = "softmax", scalar_scores: bool = False, l2: float = 1e-4) -> AmasModel:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    classes = tuple(classes)
    if len(classes) < 1 or len(set(classes)) != len(classes):
        raise ConfigError("classes must be a non-empty list of distinct labels")
    if head not in ("softmax", "sigmoid"):
        raise ConfigError(f"unknown head {head!r}")
    if head == "sigmoid" and len(classes) != 2:
        raise ConfigError("the sigmoid head needs exactly two classes")
    if l2 < 0:
        raise ConfigError("l2 must be non-negative")
    params = {
        "att.W": init_glorot_uniform(rng.child("att"), att_width, u),
        "att.b": np.zeros(att_width),
    }
    params.update(init_lstm(rng.child("lstm"), lstm_width, r).to_params())
    outputs = 1 if head == "sigmoid" else len(classes)
    params["head.W"] = init_glorot_uniform(rng.child("head"), outputs, att_width + lstm_width)
    params["head.b"] = np.zeros(outputs)
    return AmasModel(u, r, att_width, lstm_width, classes, variant, params, head, scalar_scores, l2)


# ------------------------------------------------------------------ forward


class AttentionTrace(NamedTuple):
    weights: np.ndarray  # (T, width), or (T,) in scalar-score mode
    vectors: np.ndarray  # (T, width)

    def padded(self, t_max: int) -> np.ndarray:
        """Weights laid out over ``t_max`` steps; padded steps get 0."""
        out = np.zeros((t_max,) + self.weights.shape[1:])
        out[: self.weights.shape[0]] = self.weights
        return out


def attention_weights(H: np.ndarray, scalar: bool = False) -> np.ndarray:
    """Softmax over time (axis 0) of each column, or of the row sums."""
    if scalar:
        return softmax(H.sum(axis=1))
    z = H - H.max(axis=0)
    e = np.exp(z)
    return e / e.sum(axis=0)


def _attention_backward(H: np.ndarray, mu: np.ndarray, d_alpha_last: np.ndarray, scalar: bool) -> np.ndarray:
    """Gradient w.r.t. ``H`` of ``alpha_T = mu_T * H_T`` given upstream ``d_alpha_last``."""
    T = H.shape[0]
    dH = np.zeros_like(H)
    if scalar:
        dH[-1] += mu[-1] * d_alpha_last
        dmu_last = float(d_alpha_last @ H[-1])
        # d mu_T / d s_t = mu_T (delta_tT - mu_t); each s_t is a row sum
        ds = mu[-1] * ((np.arange(T) == T - 1) - mu) * dmu_last
        dH += ds[:, None]
        return dH
    dH[-1] += mu[-1] * d_alpha_last
    dmu_last = d_alpha_last * H[-1]
    dz = -mu * (mu[-1] * dmu_last)
    dz[-1] += mu[-1] * dmu_last
    return dH + dz


def _dropout_mask(rng: Rng | None, rate: float, size: int) -> np.ndarray | None:
    if rng is None or rate <= 0:
        return None
    return (rng.random(size) >= rate) / (1.0 - rate)


class _Cache(NamedTuple):
    v: np.ndarray
    r: np.ndarray
    att_mask: np.ndarray | None
    lstm: LstmCellParams
    steps: list
    H: np.ndarray
    mu: np.ndarray | None
    p: np.ndarray
    head_mask: np.ndarray | None
    p_in: np.ndarray


def forward(model: AmasModel, record: AttributedSequence, params: dict | None = None, dropout_rng: Rng | None = None):
    """Return ``(scores, logits, trace, cache)``; dropout is active only when ``dropout_rng`` is given."""
    params = model.params if params is None else params
    if len(record.sequence) == 0:
        raise EmptySequenceError(f"record {record.id} has an empty sequence")
    v = record.attributes
    if v.shape != (model.u,):
        raise DimensionError(f"attribute vector has length {v.shape[0]}, expected {model.u}")
    r = np.tanh(params["att.W"] @ v + params["att.b"])
    att_mask = _dropout_mask(dropout_rng and dropout_rng.child("att"), ATT_DROPOUT, model.att_width)
    r_used = r * att_mask if att_mask is not None else r
    lstm = LstmCellParams.from_params(params)
    states, steps = lstm_forward(lstm, one_hot_steps(record.sequence, model.r))
    Hs = np.stack([s.h for s in states])
    mu = None
    if model.variant == "none":
        p = np.concatenate([r_used, Hs[-1]])
        trace = AttentionTrace(np.zeros((0,)), np.zeros((0,)))
        H = Hs
    elif model.variant == "asa":
        H = Hs
        mu = attention_weights(H, model.scalar_scores)
        alpha = (mu[:, None] if model.scalar_scores else mu) * H
        p = np.concatenate([r_used, alpha[-1]])
        trace = AttentionTrace(mu, alpha)
    else:
        H = np.concatenate([np.tile(r_used, (len(states), 1)), Hs], axis=1)
        mu = attention_weights(H, model.scalar_scores)
        alpha = (mu[:, None] if model.scalar_scores else mu) * H
        p = alpha[-1]
        trace = AttentionTrace(mu, alpha)
    head_mask = _dropout_mask(dropout_rng and dropout_rng.child("head"), HEAD_DROPOUT, p.shape[0])
    p_in = p * head_mask if head_mask is not None else p
    logits = params["head.W"] @ p_in + params["head.b"]
    if model.head == "sigmoid":
        q = float(sigmoid(logits)[0])
        scores = np.array([1.0 - q, q])
    else:
        scores = softmax(logits)
    cache = _Cache(v, r, att_mask, lstm, steps, H, mu, p, head_mask, p_in)
    return scores, logits, trace, cache


def asa_forward(model: AmasModel, record: AttributedSequence, params: dict | None = None):
    if model.variant != "asa":
        raise ConfigError(f"model variant is {model.variant!r}, not 'asa'")
    scores, _, trace, cache = forward(model, record, params)
    return scores, trace, cache


def asha_forward(model: AmasModel, record: AttributedSequence, params: dict | None = None):
    if model.variant != "asha":
        raise ConfigError(f"model variant is {model.variant!r}, not 'asha'")
    scores, _, trace, cache = forward(model, record, params)
    return scores, trace, cache


def classify(model: AmasModel, record: AttributedSequence) -> tuple[int, np.ndarray]:
    scores = forward(model, record)[0]
    return int(np.argmax(scores)), scores


# ----------------------------------------------------------- loss and grads


def record_loss_grads(model: AmasModel, record: AttributedSequence, params: dict | None = None,
                      dropout_rng: Rng | None = None, with_l2: bool = True):
    """Cross-entropy of one record (plus the l2 penalty on recurrent kernels) and its gradient."""
    params = model.params if params is None else params
    if record.label is None:
        raise ConfigError(f"record {record.id} has no label")
    y = model.class_index(record.label)
    scores, logits, _, c = forward(model, record, params, dropout_rng)
    grads = {k: np.zeros_like(v) for k, v in params.items()}

    if model.head == "sigmoid":
        z = float(logits[0])
        # -log sigmoid(z) for y=1, -log(1 - sigmoid(z)) for y=0
        loss = float(np.logaddexp(0.0, -z if y == 1 else z))
        dlogits = np.array([scores[1] - y])
    else:
        loss = -float(log_softmax(logits)[y])
        dlogits = scores.copy()
        dlogits[y] -= 1.0
    grads["head.W"] += np.outer(dlogits, c.p_in)
    grads["head.b"] += dlogits
    dp = params["head.W"].T @ dlogits
    if c.head_mask is not None:
        dp = dp * c.head_mask

    a = model.att_width
    T = c.H.shape[0]
    dHs = np.zeros((T, model.lstm_width))
    if model.variant == "none":
        dr_used, dHs[-1] = dp[:a], dp[a:]
    elif model.variant == "asa":
        dr_used = dp[:a]
        dHs = _attention_backward(c.H, c.mu, dp[a:], model.scalar_scores)
    else:
        dH = _attention_backward(c.H, c.mu, dp, model.scalar_scores)
        dr_used = dH[:, :a].sum(axis=0)
        dHs = dH[:, a:]
    dr = dr_used * c.att_mask if c.att_mask is not None else dr_used
    dz = dr * (1.0 - c.r**2)
    grads["att.W"] += np.outer(dz, c.v)
    grads["att.b"] += dz
    back = lstm_backward(c.lstm, c.steps, d_hs=list(dHs))
    for name, g in back.params.items():
        grads["lstm." + name] += g
    if with_l2 and model.l2:
        for gate in "ifoc":
            U = params[f"lstm.U_{gate}"]
            loss += model.l2 * float((U * U).sum())
            grads[f"lstm.U_{gate}"] += 2.0 * model.l2 * U
    return loss, grads


def mean_loss(model: AmasModel, records: Sequence[AttributedSequence]) -> float:
    """Mean cross-entropy without dropout or penalty."""
    total = 0.0
    for rec in records:
        scores = forward(model, rec)[0]
        total -= math.log(max(float(scores[model.class_index(rec.label)]), 1e-300))
    return total / len(records)


# ----------------------------------------------------------------- training


def adaptive_schedule(n_first: int, lam: float, epochs: int, cap: int | None = None) -> list[int]:
    """Samples per epoch ``floor(n_first * lam**(tau - 1))``, capped at ``cap`` and at least 1.

    ``lam`` is taken at its decimal value (``1.01`` means 101/100), so the
    floors are exact.
    """
    if lam < 1:
        raise ConfigError(f"adaptive sampling rate must be >= 1, got {lam}")
    if n_first < 1:
        raise ConfigError("the first epoch needs at least one sample")
    rate = Fraction(repr(float(lam)))
    counts = []
    for tau in range(1, epochs + 1):
        n = math.floor(n_first * rate ** (tau - 1))
        if cap is not None:
            n = min(n, cap)
        counts.append(max(1, n))
    return counts


def amas_train(
    model: AmasModel,
    dataset: Dataset | Sequence[AttributedSequence],
    rho: float = 0.01,
    epochs: int = 10,
    lambda_adaptive: float = 1.0,
    rng: Rng | None = None,
    n_first: int | None = None,
    batch_size: int = 16,
    dropout: bool = True,
    validation: Sequence[AttributedSequence] | None = None,
    patience: int | None = None,
):
    """Adam on mini-batches of a per-epoch random sample.

    Epoch ``tau`` draws ``adaptive_schedule(...)[tau - 1]`` records without
    replacement. ``n_first`` defaults to the training-set size. With
    ``patience`` and a validation set, training stops once the validation
    loss has not improved for that many epochs and the best parameters are
    returned. Returns ``(model, history)``.
    """
    records = list(dataset)
    if not records:
        raise ConfigError("no training records")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    rng = rng or Rng(0)
    schedule = adaptive_schedule(n_first or len(records), lambda_adaptive, epochs, cap=len(records))
    params = dict(model.params)
    state = AdamState()
    history = []
    best = (math.inf, params)
    stale = 0
    for epoch, n in enumerate(schedule, start=1):
        erng = rng.child(f"epoch{epoch}")
        order = erng.permutation(len(records))[:n]
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            acc = {k: np.zeros_like(v) for k, v in params.items()}
            for k in idx:
                drop = erng.child(f"drop{k}") if dropout else None
                loss, grads = record_loss_grads(model, records[k], params, drop)
                if not math.isfinite(loss):
                    raise NumericalError(f"loss became non-finite on record {records[k].id}")
                for name, g in grads.items():
                    acc[name] += g
            acc = {name: g / len(idx) for name, g in acc.items()}
            state, params = adam_update(state, params, acc, rho=rho)
        current = replace(model, params=params)
        row = {"epoch": epoch, "n_samples": n, "train_loss": mean_loss(current, records)}
        if validation:
            row["val_loss"] = mean_loss(current, validation)
            if row["val_loss"] < best[0]:
                best, stale = (row["val_loss"], params), 0
            else:
                stale += 1
        history.append(row)
        if patience is not None and validation and stale >= patience:
            params = best[1]
            break
    return replace(model, params=params), history


# --------------------------------------------------------------- evaluation


def topk_accuracy(model: AmasModel, records: Sequence[AttributedSequence], k: int) -> float:
    if not 1 <= k <= model.n_classes:
        raise ConfigError(f"k must lie in [1, {model.n_classes}], got {k}")
    hits = 0
    for rec in records:
        scores = forward(model, rec)[0]
        ranked = np.argsort(-scores, kind="stable")[:k]
        hits += int(model.class_index(rec.label) in ranked)
    return hits / len(records)


def prediction_rows(model: AmasModel, records: Sequence[AttributedSequence]) -> list[list]:
    """Rows ``id, predicted, true, score_0..score_{C-1}``."""
    rows = []
    for rec in records:
        idx, scores = classify(model, rec)
        rows.append([rec.id, model.classes[idx], rec.label if rec.label is not None else "", *scores.tolist()])
    return rows


def attention_record(model: AmasModel, record: AttributedSequence, items: Sequence[str] | None = None) -> dict:
    """JSON-ready attention trace of one record."""
    _, _, trace, _ = forward(model, record)
    seq = [items[i] for i in record.sequence] if items is not None else list(record.sequence)
    return {"id": record.id, "variant": model.variant, "sequence": seq,
            "weights": trace.weights.tolist(), "vectors": trace.vectors.tolist()}
