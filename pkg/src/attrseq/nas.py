"""Unsupervised attributed-sequence embedding.

An attribute autoencoder (ReLU encoder, sigmoid decoder) produces an encoding
``V`` that is added to the first hidden state of an LSTM trained to predict
the next item. The embedding of a record is the final LSTM cell state.

Prediction at step t is scored against item t; the input at step 1 is the
zero vector and the input at step t > 1 is item t-1 (teacher forcing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import AttributedSequence, Dataset, EncodedSequence, encode_one_hot
from .errors import ConfigError, DimensionError, EmptySequenceError, NumericalError
from .numerics import (
    LstmCellParams,
    Rng,
    init_glorot_uniform,
    init_lstm,
    log_softmax,
    lstm_backward,
    lstm_forward,
    sgd_update,
    softmax,
    stack_backward,
    stack_forward,
)


@dataclass(frozen=True)
class NasModel:
    u: int
    r: int
    d: int
    enc_widths: tuple[int, ...]  # last entry == d
    params: dict = field(repr=False)
    # activation of the LSTM candidate gate; this network uses sigmoid there
    candidate: str = "sigmoid"
    conditioned: bool = True

    @property
    def M(self) -> int:
        return len(self.enc_widths)

    @property
    def lstm(self) -> LstmCellParams:
        return LstmCellParams.from_params(self.params)

    def hyperparameters(self) -> dict:
        return {"u": self.u, "r": self.r, "d": self.d, "enc_widths": list(self.enc_widths),
                "candidate": self.candidate, "conditioned": self.conditioned}


def init_nas(rng: Rng, u: int, r: int, d: int = 15, hidden: tuple[int, ...] = (),
             candidate: str = "sigmoid", conditioned: bool = True) -> NasModel:
    """Glorot-uniform kernels, orthogonal recurrent kernels, zero biases.

    ``hidden`` lists encoder widths before the final ``d``-wide layer, so the
    default builds the smallest network (one encoder and one decoder layer).
    """
    enc_widths = tuple(hidden) + (d,)
    dec_widths = tuple(reversed(hidden)) + (u,)
    params = {}
    width = u
    for k, w in enumerate(enc_widths):
        params[f"enc{k}.W"] = init_glorot_uniform(rng.child(f"enc{k}"), w, width)
        params[f"enc{k}.b"] = np.zeros(w)
        width = w
    for k, w in enumerate(dec_widths):
        params[f"dec{k}.W"] = init_glorot_uniform(rng.child(f"dec{k}"), w, width)
        params[f"dec{k}.b"] = np.zeros(w)
        width = w
    params.update(init_lstm(rng.child("lstm"), d, r).to_params())
    params["out.W"] = init_glorot_uniform(rng.child("out"), r, d)
    params["out.b"] = np.zeros(r)
    return NasModel(u, r, d, enc_widths, params, candidate, conditioned)


# ------------------------------------------------------------------ forward


def att_forward(model: NasModel, x: np.ndarray, params: dict | None = None):
    """Return ``(V, x_hat, cache)``."""
    params = model.params if params is None else params
    if x.shape != (model.u,):
        raise DimensionError(f"attribute vector has length {x.shape[0]}, expected {model.u}")
    V, enc_cache = stack_forward(params, "enc", model.M, x, "relu")
    x_hat, dec_cache = stack_forward(params, "dec", model.M, V, "sigmoid")
    return V, x_hat, (enc_cache, dec_cache)


def _inputs(model: NasModel, enc: EncodedSequence) -> list[np.ndarray]:
    return [np.zeros(model.r)] + [enc.onehots[t] for t in range(enc.true_len - 1)]


def seq_forward(model: NasModel, enc: EncodedSequence, V: np.ndarray, params: dict | None = None, upto: int | None = None):
    """Return ``(ys, c_last, cache)`` with one distribution per unmasked step.

    ``upto`` truncates the pass after that many steps.
    """
    params = model.params if params is None else params
    if enc.true_len < 1:
        raise EmptySequenceError("sequence network needs at least one item")
    if enc.onehots.shape[1] != model.r:
        raise DimensionError(f"one-hot width {enc.onehots.shape[1]} != vocabulary size {model.r}")
    if V.shape != (model.d,):
        raise DimensionError(f"attribute encoding has length {V.shape[0]}, expected {model.d}")
    xs = _inputs(model, enc)[: upto or enc.true_len]
    lstm = LstmCellParams.from_params(params)
    states, steps = lstm_forward(lstm, xs, first_offset=V if model.conditioned else None, candidate=model.candidate)
    logits = [params["out.W"] @ s.h + params["out.b"] for s in states]
    ys = [softmax(z) for z in logits]
    return ys, states[-1].c, (lstm, states, steps, logits)


# ------------------------------------------------------------ losses, grads


def _encode(record: AttributedSequence, r: int) -> EncodedSequence:
    if len(record.sequence) == 0:
        raise EmptySequenceError(f"record {record.id} has an empty sequence")
    return encode_one_hot(record.sequence, r, len(record.sequence))


def attribute_loss_grads(model: NasModel, x: np.ndarray, params: dict | None = None):
    """``L_A = ||x - x_hat||^2`` and its gradient w.r.t. the autoencoder."""
    params = model.params if params is None else params
    V, x_hat, (enc_cache, dec_cache) = att_forward(model, x, params)
    diff = x_hat - x
    grads = {k: np.zeros_like(v) for k, v in params.items() if k.startswith(("enc", "dec"))}
    dV = stack_backward(params, "dec", dec_cache, 2.0 * diff, grads)
    stack_backward(params, "enc", enc_cache, dV, grads)
    return float(diff @ diff), grads


def sequence_loss_grads(model: NasModel, enc: EncodedSequence, V: np.ndarray, params: dict | None = None,
                        only_step: int | None = None):
    """``L_S = -sum_t log y_t[item_t]`` with gradients for the sequence network.

    Returns ``(loss, grads, dV)``. With ``only_step`` the loss is the single
    term for that (0-based) step and the pass stops there.
    """
    params = model.params if params is None else params
    upto = None if only_step is None else only_step + 1
    ys, _, (lstm, states, steps, logits) = seq_forward(model, enc, V, params, upto)
    targets = [int(np.argmax(enc.onehots[t])) for t in range(len(ys))]
    scored = range(len(ys)) if only_step is None else [only_step]
    grads = {k: np.zeros_like(v) for k, v in params.items() if k.startswith(("lstm.", "out."))}
    loss = 0.0
    d_hs = [None] * len(ys)
    for t in scored:
        loss -= float(log_softmax(logits[t])[targets[t]])
        dz = ys[t].copy()
        dz[targets[t]] -= 1.0
        grads["out.W"] += np.outer(dz, states[t].h)
        grads["out.b"] += dz
        d_hs[t] = params["out.W"].T @ dz
    back = lstm_backward(lstm, steps, d_hs=d_hs, candidate=model.candidate)
    for name, g in back.params.items():
        grads["lstm." + name] += g
    dV = back.dh_first if model.conditioned else np.zeros(model.d)
    return loss, grads, dV


def nas_losses(model: NasModel, record: AttributedSequence) -> tuple[float, float]:
    enc = _encode(record, model.r)
    V, x_hat, _ = att_forward(model, record.attributes)
    diff = record.attributes - x_hat
    ys, _, (_, _, _, logits) = seq_forward(model, enc, V)
    L_S = -sum(float(log_softmax(logits[t])[k]) for t, k in enumerate(record.sequence))
    return float(diff @ diff), L_S


def nas_gradients(model: NasModel, record: AttributedSequence, params: dict | None = None):
    """Gradient of ``L_A + L_S`` w.r.t. every parameter (``L_S`` also reaches the encoder via V)."""
    params = model.params if params is None else params
    enc = _encode(record, model.r)
    L_A, grads = attribute_loss_grads(model, record.attributes, params)
    V, _, (enc_cache, _) = att_forward(model, record.attributes, params)
    L_S, seq_grads, dV = sequence_loss_grads(model, enc, V, params)
    grads.update(seq_grads)
    stack_backward(params, "enc", enc_cache, dV, grads)
    return L_A + L_S, grads


# ----------------------------------------------------------------- training


def _finite(value: float, what: str, record: AttributedSequence) -> float:
    if not math.isfinite(value):
        raise NumericalError(f"{what} became non-finite on record {record.id}")
    return value


def corpus_losses(model: NasModel, records) -> tuple[float, float]:
    la, ls = zip(*(nas_losses(model, rec) for rec in records))
    return float(np.mean(la)), float(np.mean(ls))


def nas_train(
    model: NasModel,
    dataset: Dataset | list[AttributedSequence],
    lr: float = 0.01,
    T_A: int = 5,
    T_S: int = 5,
    eps_A: float = 1e-6,
    eps_S: float = 1e-6,
    epochs: int = 1,
    per_step_updates: bool = True,
    corpus_mode: bool = False,
    rng: Rng | None = None,
    validation: list[AttributedSequence] | None = None,
):
    """Alternating per-record optimisation of the attribute and sequence networks.

    For every record: up to ``T_A`` SGD steps on ``L_A`` (stopping once the
    loss changes by less than ``eps_A``), then up to ``T_S`` passes over the
    sequence (stopping on ``eps_S``). With ``per_step_updates`` the sequence
    network is updated after every time step, otherwise once per pass.
    ``epochs`` repeats the whole sweep.

    ``corpus_mode`` instead runs one combined SGD step per record per epoch
    in a seeded shuffled order.

    Returns ``(model, history)``; each history row holds corpus-mean losses
    measured after the epoch.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if T_A < 0 or T_S < 0 or epochs < 0:
        raise ConfigError("iteration counts must be non-negative")
    records = list(dataset)
    for rec in records:
        if len(rec.sequence) == 0:
            raise EmptySequenceError(f"record {rec.id} has an empty sequence")
    rng = rng or Rng(0)
    params = dict(model.params)
    history = []
    for epoch in range(1, epochs + 1):
        if corpus_mode:
            order = rng.child(f"epoch{epoch}").permutation(len(records))
            for k in order:
                rec = records[k]
                loss, grads = nas_gradients(model, rec, params)
                _finite(loss, "loss", rec)
                params = sgd_update(params, grads, lr)
        else:
            for rec in records:
                params = _train_record(model, params, rec, lr, T_A, T_S, eps_A, eps_S, per_step_updates)
        current = replace(model, params=params)
        L_A, L_S = corpus_losses(current, records)
        row = {"epoch": epoch, "L_A": L_A, "L_S": L_S, "train_loss": L_A + L_S}
        if validation:
            vA, vS = corpus_losses(current, validation)
            row["val_loss"] = vA + vS
        history.append(row)
    return replace(model, params=params), history


def _train_record(model, params, rec, lr, T_A, T_S, eps_A, eps_S, per_step):
    x = rec.attributes
    prev = None
    for tau in range(1, T_A + 1):
        _, grads = attribute_loss_grads(model, x, params)
        params = sgd_update(params, grads, lr)
        _, x_hat, _ = att_forward(model, x, params)
        loss = _finite(float((x - x_hat) @ (x - x_hat)), "L_A", rec)
        if tau > 1 and abs(loss - prev) < eps_A:
            break
        prev = loss

    enc = _encode(rec, model.r)
    V, _, _ = att_forward(model, x, params)
    prev = None
    for tau in range(1, T_S + 1):
        if per_step:
            for t in range(enc.true_len):
                _, grads, _ = sequence_loss_grads(model, enc, V, params, only_step=t)
                params = sgd_update(params, grads, lr)
        else:
            _, grads, _ = sequence_loss_grads(model, enc, V, params)
            params = sgd_update(params, grads, lr)
        loss = _finite(sequence_loss_grads(model, enc, V, params)[0], "L_S", rec)
        if tau > 1 and abs(loss - prev) < eps_S:
            break
        prev = loss
    return params


def nas_embed(model: NasModel, record: AttributedSequence) -> np.ndarray:
    """Final cell state after the conditioned sequence pass."""
    enc = _encode(record, model.r)
    V, _, _ = att_forward(model, record.attributes)
    _, c_last, _ = seq_forward(model, enc, V)
    return c_last
