"""One-shot classification of attributed sequences.

A feature extractor (tanh dense stack on the attributes, LSTM on the
sequence, tanh projection of their concatenation) is trained with a
contrastive loss on labeled pairs from seen classes. Records of unseen
classes are then labeled by their nearest entry in a gallery that holds a
single example per class.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .contrastive import FeedbackBatch, as_batch, check_finite, contrastive_dloss, contrastive_loss, distance_grad
from .data import AttributedSequence, one_hot_steps
from .errors import ConfigError, DimensionError, EmptySequenceError
from .numerics import (
    LstmCellParams,
    Rng,
    init_glorot_uniform,
    init_lstm,
    lstm_backward,
    lstm_forward,
    sgd_update,
    stack_backward,
    stack_forward,
)

DISTANCES = ("euclidean", "manhattan")


@dataclass(frozen=True)
class OlasModel:
    u: int
    r: int
    fc_widths: tuple[int, ...]
    lstm_width: int
    n: int
    params: dict = field(repr=False)
    margin: float = 1.0
    distance: str = "euclidean"

    @property
    def m(self) -> int:
        return len(self.fc_widths)

    def hyperparameters(self) -> dict:
        return {"u": self.u, "r": self.r, "fc_widths": list(self.fc_widths), "lstm_width": self.lstm_width,
                "n": self.n, "margin": self.margin, "distance": self.distance}


def init_olas(rng: Rng, u: int, r: int, n: int = 50, fc_widths: tuple[int, ...] = (50, 50, 50),
              lstm_width: int = 50, margin: float = 1.0, distance: str = "euclidean") -> OlasModel:
    """Glorot-uniform dense kernels, LSTM input kernels uniform in +-sqrt(6 / lstm_width)."""
    if margin <= 0:
        raise ConfigError(f"margin must be positive, got {margin}")
    if distance not in DISTANCES:
        raise ConfigError(f"unknown distance {distance!r}; choose from {DISTANCES}")
    if not fc_widths:
        raise ConfigError("attribute stack needs at least one layer")
    params = {}
    width = u
    for k, w in enumerate(fc_widths):
        params[f"fc{k}.W"] = init_glorot_uniform(rng.child(f"fc{k}"), w, width)
        params[f"fc{k}.b"] = np.zeros(w)
        width = w
    lstm = init_lstm(rng.child("lstm"), lstm_width, r, input_bound=float(np.sqrt(6.0 / lstm_width)))
    params.update(lstm.to_params())
    params["head.W"] = init_glorot_uniform(rng.child("head"), n, fc_widths[-1] + lstm_width)
    params["head.b"] = np.zeros(n)
    return OlasModel(u, r, tuple(fc_widths), lstm_width, n, params, margin, distance)


def corenet_forward(model: OlasModel, record: AttributedSequence, params: dict | None = None):
    """Return ``(feature, cache)``; features lie in (-1, 1)."""
    params = model.params if params is None else params
    if len(record.sequence) == 0:
        raise EmptySequenceError(f"record {record.id} has an empty sequence")
    if record.attributes.shape != (model.u,):
        raise DimensionError(f"attribute vector has length {record.attributes.shape[0]}, expected {model.u}")
    a, fc_cache = stack_forward(params, "fc", model.m, record.attributes, "tanh")
    lstm = LstmCellParams.from_params(params)
    states, steps = lstm_forward(lstm, one_hot_steps(record.sequence, model.r))
    joined = np.concatenate([a, states[-1].h])
    p = np.tanh(params["head.W"] @ joined + params["head.b"])
    return p, (fc_cache, lstm, steps, joined, p)


def corenet_backward(model: OlasModel, cache, d_feature: np.ndarray, grads: dict, params: dict | None = None) -> None:
    params = model.params if params is None else params
    fc_cache, lstm, steps, joined, p = cache
    dz = d_feature * (1.0 - p**2)
    grads["head.W"] += np.outer(dz, joined)
    grads["head.b"] += dz
    dj = params["head.W"].T @ dz
    stack_backward(params, "fc", fc_cache, dj[: model.fc_widths[-1]], grads)
    back = lstm_backward(lstm, steps, d_h_final=dj[model.fc_widths[-1]:])
    for name, g in back.params.items():
        grads["lstm." + name] += g


def olas_features(model: OlasModel, record: AttributedSequence) -> np.ndarray:
    return corenet_forward(model, record)[0]


def feature_distance(a: np.ndarray, b: np.ndarray, kind: str = "euclidean") -> float:
    if kind == "euclidean":
        return float(np.linalg.norm(a - b))
    if kind == "manhattan":
        return float(np.abs(a - b).sum())
    raise ConfigError(f"unknown distance {kind!r}")


def _distance_grad(a: np.ndarray, b: np.ndarray, kind: str) -> np.ndarray:
    if kind == "manhattan":
        return np.sign(a - b)
    return distance_grad(a, b, "exact")


def olas_pair_loss(model: OlasModel, left, right, label: int) -> float:
    d = feature_distance(olas_features(model, left), olas_features(model, right), model.distance)
    return contrastive_loss(d, label, model.margin)


def olas_pair_loss_grads(model: OlasModel, left, right, label: int, params: dict | None = None):
    params = model.params if params is None else params
    pi, ci = corenet_forward(model, left, params)
    pj, cj = corenet_forward(model, right, params)
    d = feature_distance(pi, pj, model.distance)
    loss = contrastive_loss(d, label, model.margin)
    upstream = contrastive_dloss(d, label, model.margin) * _distance_grad(pi, pj, model.distance)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    corenet_backward(model, ci, upstream, grads, params)
    corenet_backward(model, cj, -upstream, grads, params)
    return loss, grads


def olas_train(model: OlasModel, triplets, lr: float = 0.01, phi: int = 10, eps: float = 1e-6,
               rng: Rng | None = None, validation=None):
    """Per-pair SGD for ``phi`` epochs.

    Each epoch visits the pairs in a seeded shuffled order; a pair whose loss
    changed by less than ``eps`` since its previous visit gets no update that
    epoch. Returns ``(model, history)``.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if phi < 0:
        raise ConfigError("phi must be non-negative")
    batch = as_batch(triplets)
    rng = rng or Rng(0)
    params = dict(model.params)
    last: dict[int, float] = {}
    history = []
    for epoch in range(1, phi + 1):
        skipped = 0
        for k in rng.child(f"epoch{epoch}").permutation(len(batch)):
            p = batch.pairs[k]
            loss, grads = olas_pair_loss_grads(model, p.left, p.right, p.label, params)
            check_finite(loss, f"pair loss ({p.left.id}, {p.right.id})")
            converged = k in last and abs(loss - last[k]) < eps
            last[k] = loss
            if converged:
                skipped += 1
                continue
            params = sgd_update(params, grads, lr)
        current = replace(model, params=params)
        row = {"epoch": epoch, "train_loss": mean_pair_loss(current, batch), "skipped_pairs": skipped}
        if validation:
            row["val_loss"] = mean_pair_loss(current, as_batch(validation))
        history.append(row)
    return replace(model, params=params), history


def mean_pair_loss(model: OlasModel, batch: FeedbackBatch) -> float:
    feats: dict[str, np.ndarray] = {}
    for p in batch:
        for rec in (p.left, p.right):
            if rec.id not in feats:
                feats[rec.id] = olas_features(model, rec)
    return float(np.mean([
        contrastive_loss(feature_distance(feats[p.left.id], feats[p.right.id], model.distance), p.label, model.margin)
        for p in batch
    ]))


# ----------------------------------------------------------------- labeling


@dataclass(frozen=True)
class Gallery:
    entries: tuple[tuple[AttributedSequence, str], ...]

    def __post_init__(self):
        labels = [label for _, label in self.entries]
        if len(set(labels)) != len(labels):
            raise ConfigError("gallery holds more than one example for a class")

    @classmethod
    def from_records(cls, records: Sequence[AttributedSequence]) -> "Gallery":
        for rec in records:
            if rec.label is None:
                raise ConfigError(f"gallery record {rec.id} has no label")
        return cls(tuple((rec, rec.label) for rec in records))

    @property
    def labels(self) -> list[str]:
        return [label for _, label in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def gallery_features(model, gallery: Gallery, embed=None) -> np.ndarray:
    """Feature matrix of the gallery, one row per entry, computed once per model."""
    if len(gallery) == 0:
        raise ConfigError("gallery is empty")
    embed = embed or (lambda rec: olas_features(model, rec))
    return np.stack([embed(rec) for rec, _ in gallery.entries])


def nearest_label(query: np.ndarray, features: np.ndarray, labels: list[str], distance: str = "euclidean") -> str:
    """Label of the closest row; ties go to the earliest row."""
    best, best_d = 0, float("inf")
    for g in range(features.shape[0]):
        d = feature_distance(query, features[g], distance)
        if d < best_d:
            best, best_d = g, d
    return labels[best]


def oneshot_label(model: OlasModel, gallery: Gallery, query: AttributedSequence,
                  features: np.ndarray | None = None) -> str:
    if len(gallery) == 0:
        raise ConfigError("gallery is empty")
    features = gallery_features(model, gallery) if features is None else features
    return nearest_label(olas_features(model, query), features, gallery.labels, model.distance)


def oneshot_report(model: OlasModel, gallery: Gallery, queries: Sequence[AttributedSequence]) -> dict:
    """``{"accuracy", "per_class", "n_queries"}`` over labeled ``queries``."""
    if not queries:
        raise ConfigError("no queries to evaluate")
    features = gallery_features(model, gallery)
    hits: dict[str, list[int]] = {}
    for q in queries:
        if q.label is None:
            raise ConfigError(f"query {q.id} has no label")
        ok = int(oneshot_label(model, gallery, q, features) == q.label)
        hits.setdefault(q.label, []).append(ok)
    total = sum(sum(v) for v in hits.values())
    return {
        "accuracy": total / len(queries),
        "per_class": {c: sum(v) / len(v) for c, v in hits.items()},
        "n_queries": len(queries),
    }


def oneshot_eval(model: OlasModel, gallery: Gallery, queries: Sequence[AttributedSequence]) -> float:
    return oneshot_report(model, gallery, queries)["accuracy"]
