"""Metric learning on attributed sequences from pairwise feedback.

An attribute network (dense stack) and a sequence network (LSTM) are fused
into one embedding in one of three ways:

* ``balanced``: ``z = act(W_z [V ; h_T] + b_z)``
* ``att-centric``: the last LSTM hidden state is concatenated to the
  attributes before the first dense layer; the embedding is the stack output
* ``seq-centric``: the stack output is added to the first LSTM hidden state;
  the embedding is the last hidden state (requires equal widths)

Both records of a pair go through the same weights and the Euclidean
distance between their embeddings is trained with a contrastive loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .contrastive import FeedbackBatch, as_batch, check_finite, contrastive_dloss, contrastive_loss, distance_grad
from .data import AttributedSequence, Dataset, one_hot_steps
from .errors import ConfigError, DimensionError, EmptySequenceError
from .numerics import (
    LstmCellParams,
    Rng,
    init_glorot_uniform,
    init_lstm,
    log_softmax,
    lstm_backward,
    lstm_forward,
    sgd_update,
    sigmoid,
    softmax,
    stack_backward,
    stack_forward,
)
from .numerics.tensors import activation, activation_grad

FUSIONS = ("balanced", "att-centric", "seq-centric")


@dataclass(frozen=True)
class MlasModel:
    u: int
    r: int
    att_widths: tuple[int, ...]
    seq_width: int
    fusion: str
    params: dict = field(repr=False)
    act: str = "sigmoid"
    margin: float = 1.0

    @property
    def M(self) -> int:
        return len(self.att_widths)

    @property
    def d(self) -> int:
        if self.fusion == "balanced":
            return self.params["fuse.W"].shape[0]
        if self.fusion == "att-centric":
            return self.att_widths[-1]
        return self.seq_width

    def hyperparameters(self) -> dict:
        return {"u": self.u, "r": self.r, "att_widths": list(self.att_widths), "seq_width": self.seq_width,
                "fusion": self.fusion, "act": self.act, "margin": self.margin, "d": self.d}


def init_mlas(rng: Rng, u: int, r: int, fusion: str = "balanced", att_widths: tuple[int, ...] = (15,),
              seq_width: int = 15, d: int = 15, act: str = "sigmoid", margin: float = 1.0) -> MlasModel:
    if fusion not in FUSIONS:
        raise ConfigError(f"unknown fusion {fusion!r}; choose from {FUSIONS}")
    if margin <= 0:
        raise ConfigError(f"margin must be positive, got {margin}")
    if not att_widths:
        raise ConfigError("attribute network needs at least one layer")
    if fusion == "seq-centric" and att_widths[-1] != seq_width:
        raise DimensionError(
            f"seq-centric fusion needs equal attribute and sequence widths, got {att_widths[-1]} and {seq_width}")
    params = {}
    width = u + seq_width if fusion == "att-centric" else u
    for k, w in enumerate(att_widths):
        params[f"att{k}.W"] = init_glorot_uniform(rng.child(f"att{k}"), w, width)
        params[f"att{k}.b"] = np.zeros(w)
        width = w
    params.update(init_lstm(rng.child("lstm"), seq_width, r).to_params())
    if fusion == "balanced":
        params["fuse.W"] = init_glorot_uniform(rng.child("fuse"), d, att_widths[-1] + seq_width)
        params["fuse.b"] = np.zeros(d)
    return MlasModel(u, r, tuple(att_widths), seq_width, fusion, params, act, margin)


# ------------------------------------------------------------------ forward


def _check_record(model: MlasModel, record: AttributedSequence) -> list[np.ndarray]:
    if len(record.sequence) == 0:
        raise EmptySequenceError(f"record {record.id} has an empty sequence")
    if record.attributes.shape != (model.u,):
        raise DimensionError(f"attribute vector has length {record.attributes.shape[0]}, expected {model.u}")
    return one_hot_steps(record.sequence, model.r)


def fusion_forward(model: MlasModel, record: AttributedSequence, params: dict | None = None):
    """Return ``(embedding, cache)``."""
    params = model.params if params is None else params
    xs = _check_record(model, record)
    x = record.attributes
    lstm = LstmCellParams.from_params(params)
    if model.fusion == "balanced":
        V, att_cache = stack_forward(params, "att", model.M, x, model.act)
        states, steps = lstm_forward(lstm, xs)
        y = np.concatenate([V, states[-1].h])
        z = activation(model.act)(params["fuse.W"] @ y + params["fuse.b"])
        return z, (lstm, att_cache, steps, y, z)
    if model.fusion == "att-centric":
        states, steps = lstm_forward(lstm, xs)
        V, att_cache = stack_forward(params, "att", model.M, np.concatenate([x, states[-1].h]), model.act)
        return V, (lstm, att_cache, steps)
    V, att_cache = stack_forward(params, "att", model.M, x, model.act)
    states, steps = lstm_forward(lstm, xs, first_offset=V)
    return states[-1].h, (lstm, att_cache, steps)


def fusion_backward(model: MlasModel, cache, d_emb: np.ndarray, grads: dict, params: dict | None = None) -> None:
    """Accumulate the gradient of a scalar loss with upstream ``d_emb`` into ``grads``."""
    params = model.params if params is None else params
    if model.fusion == "balanced":
        lstm, att_cache, steps, y, z = cache
        dpre = d_emb * activation_grad(model.act, z)
        grads["fuse.W"] += np.outer(dpre, y)
        grads["fuse.b"] += dpre
        dy = params["fuse.W"].T @ dpre
        dV = dy[: model.att_widths[-1]]
        dh = dy[model.att_widths[-1]:]
        stack_backward(params, "att", att_cache, dV, grads)
        back = lstm_backward(lstm, steps, d_h_final=dh)
    elif model.fusion == "att-centric":
        lstm, att_cache, steps = cache
        dinput = stack_backward(params, "att", att_cache, d_emb, grads)
        back = lstm_backward(lstm, steps, d_h_final=dinput[model.u:])
    else:
        lstm, att_cache, steps = cache
        back = lstm_backward(lstm, steps, d_h_final=d_emb)
        stack_backward(params, "att", att_cache, back.dh_first, grads)
    for name, g in back.params.items():
        grads["lstm." + name] += g


def mlas_embed(model: MlasModel, record: AttributedSequence) -> np.ndarray:
    return fusion_forward(model, record)[0]


def pair_distance(model: MlasModel, left: AttributedSequence, right: AttributedSequence) -> float:
    return float(np.linalg.norm(mlas_embed(model, left) - mlas_embed(model, right)))


# ---------------------------------------------------------------- training


def pair_loss_grads(model: MlasModel, left, right, label: int, params: dict | None = None,
                    distance_mode: str = "exact") -> tuple[float, dict]:
    """Contrastive loss of one pair and its gradient; both towers share ``params``."""
    params = model.params if params is None else params
    zi, ci = fusion_forward(model, left, params)
    zj, cj = fusion_forward(model, right, params)
    dist = float(np.linalg.norm(zi - zj))
    loss = contrastive_loss(dist, label, model.margin)
    dD = contrastive_dloss(dist, label, model.margin)
    d_emb = dD * distance_grad(zi, zj, distance_mode)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    fusion_backward(model, ci, d_emb, grads, params)
    fusion_backward(model, cj, -d_emb, grads, params)
    return loss, grads


def pair_statistics(model: MlasModel, batch: FeedbackBatch) -> dict:
    """Mean loss and mean similar / dissimilar distances over ``batch``."""
    cache: dict[str, np.ndarray] = {}

    def emb(rec):
        if rec.id not in cache:
            cache[rec.id] = mlas_embed(model, rec)
        return cache[rec.id]

    losses, sim, dis = [], [], []
    for p in batch:
        dist = float(np.linalg.norm(emb(p.left) - emb(p.right)))
        losses.append(contrastive_loss(dist, p.label, model.margin))
        (dis if p.label else sim).append(dist)
    return {
        "loss": float(np.mean(losses)),
        "similar_distance": float(np.mean(sim)) if sim else float("nan"),
        "dissimilar_distance": float(np.mean(dis)) if dis else float("nan"),
    }


def mlas_train(
    model: MlasModel,
    batch,
    lr: float = 0.01,
    max_iters: int = 10,
    eps: float = 1e-6,
    rng: Rng | None = None,
    distance_mode: str = "exact",
    validation=None,
):
    """SGD over feedback pairs for ``max_iters`` epochs.

    Pairs are visited in a seeded shuffled order each epoch. A pair whose loss
    moved by less than ``eps`` since its previous visit is skipped for that
    epoch (its gradient step is omitted). Returns ``(model, history)``.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if max_iters < 0:
        raise ConfigError("max_iters must be non-negative")
    batch = as_batch(batch)
    rng = rng or Rng(0)
    params = dict(model.params)
    last: dict[int, float] = {}
    history = []
    for epoch in range(1, max_iters + 1):
        skipped = 0
        for k in rng.child(f"epoch{epoch}").permutation(len(batch)):
            p = batch.pairs[k]
            loss, grads = pair_loss_grads(model, p.left, p.right, p.label, params, distance_mode)
            check_finite(loss, f"pair loss ({p.left.id}, {p.right.id})")
            converged = k in last and abs(loss - last[k]) < eps
            last[k] = loss
            if converged:
                skipped += 1
                continue
            params = sgd_update(params, grads, lr)
        current = replace(model, params=params)
        row = {"epoch": epoch, **pair_statistics(current, batch), "skipped_pairs": skipped}
        row["train_loss"] = row.pop("loss")
        if validation:
            row["val_loss"] = pair_statistics(current, as_batch(validation))["loss"]
        history.append(row)
    return replace(model, params=params), history


# ------------------------------------------------------------- pretraining


def init_pretrain_head(rng: Rng, model: MlasModel) -> dict:
    """Throwaway decoder: attribute reconstruction and next-item prediction from the embedding."""
    d = model.d
    return {
        "pre_att.W": init_glorot_uniform(rng.child("pre_att"), model.u, d),
        "pre_att.b": np.zeros(model.u),
        "pre_seq.W": init_glorot_uniform(rng.child("pre_seq"), model.r, d),
        "pre_seq.E": init_glorot_uniform(rng.child("pre_seq_prev"), model.r, model.r),
        "pre_seq.b": np.zeros(model.r),
    }


def pretrain_loss_grads(model: MlasModel, record: AttributedSequence, omega_A: float, params: dict):
    """``omega_A * MSE(x, x_hat) + (1 - omega_A) * mean next-item cross-entropy``.

    ``params`` holds both the model and the head weights.
    """
    z, cache = fusion_forward(model, record, params)
    x = record.attributes
    grads = {k: np.zeros_like(v) for k, v in params.items()}

    x_hat = sigmoid(params["pre_att.W"] @ z + params["pre_att.b"])
    diff = x_hat - x
    mse = float(diff @ diff) / model.u
    dpre = omega_A * (2.0 / model.u) * diff * x_hat * (1.0 - x_hat)
    grads["pre_att.W"] += np.outer(dpre, z)
    grads["pre_att.b"] += dpre
    dz = params["pre_att.W"].T @ dpre

    seq = record.sequence
    ce = 0.0
    w = (1.0 - omega_A) / len(seq)
    prev = np.zeros(model.r)
    for item in seq:
        logits = params["pre_seq.W"] @ z + params["pre_seq.E"] @ prev + params["pre_seq.b"]
        ce -= float(log_softmax(logits)[item])
        dlog = softmax(logits)
        dlog[item] -= 1.0
        dlog *= w
        grads["pre_seq.W"] += np.outer(dlog, z)
        grads["pre_seq.E"] += np.outer(dlog, prev)
        grads["pre_seq.b"] += dlog
        dz += params["pre_seq.W"].T @ dlog
        prev = np.zeros(model.r)
        prev[item] = 1.0
    ce /= len(seq)
    fusion_backward(model, cache, dz, grads, params)
    return omega_A * mse + (1.0 - omega_A) * ce, grads


def mlas_pretrain(model: MlasModel, dataset: Dataset | list, omega_A: float = 0.5, epochs: int = 1,
                  lr: float = 0.01, rng: Rng | None = None) -> MlasModel:
    """Reconstruction pretraining through the fused embedding; the decoder head is discarded."""
    if not 0.0 <= omega_A <= 1.0:
        raise ConfigError(f"omega_A must lie in [0, 1], got {omega_A}")
    if epochs < 0:
        raise ConfigError("epochs must be non-negative")
    if epochs == 0:
        return model
    rng = rng or Rng(0)
    records = list(dataset)
    params = {**model.params, **init_pretrain_head(rng.child("head"), model)}
    for epoch in range(1, epochs + 1):
        for k in rng.child(f"epoch{epoch}").permutation(len(records)):
            loss, grads = pretrain_loss_grads(model, records[k], omega_A, params)
            check_finite(loss, f"pretraining loss on record {records[k].id}")
            params = sgd_update(params, grads, lr)
    return replace(model, params={k: v for k, v in params.items() if k in model.params})
