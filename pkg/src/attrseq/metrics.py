"""Evaluation metrics: k-NN outlier scores, ROC AUC, NMI, density clustering,
silhouette and accuracy, plus JSONL / CSV report writers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, UndefinedMetricError


@dataclass(frozen=True)
class EmbeddingSet:
    ids: tuple[str, ...]
    vectors: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(self.ids):
            raise DimensionError(f"need one row per id: {len(self.ids)} ids, vectors of shape {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise DimensionError("embedding contains non-finite entries")
        if self.labels is not None and len(self.labels) != len(self.ids):
            raise DimensionError("labels must align with ids")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "vectors", vectors)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return len(self.ids)


def _vectors(emb) -> np.ndarray:
    return emb.vectors if isinstance(emb, EmbeddingSet) else np.asarray(emb, dtype=np.float64)


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    """Euclidean distances from explicit differences (no Gram-matrix shortcut)."""
    X = np.asarray(X, dtype=np.float64)
    out = np.empty((X.shape[0], X.shape[0]))
    for i in range(X.shape[0]):
        out[i] = np.sqrt(((X - X[i]) ** 2).sum(axis=1))
    return out


def knn_outlier_scores(emb, k: int = 5) -> np.ndarray:
    """Distance from each point to its k-th nearest other point."""
    X = _vectors(emb)
    n = X.shape[0]
    if not 1 <= k < n:
        raise ConfigError(f"k must satisfy 1 <= k < n = {n}, got {k}")
    D = pairwise_distances(X)
    np.fill_diagonal(D, np.inf)
    return np.sort(D, axis=1)[:, k - 1]


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability a positive outscores a negative, ties counted as one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise DimensionError("scores and labels differ in length")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC needs both positive and negative labels")
    ranks = _average_ranks(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return -math.fsum(sorted((p * np.log(p)).tolist()))


def nmi(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    if len(labels_a) != len(labels_b):
        raise DimensionError(f"labelings differ in length: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        raise UndefinedMetricError("NMI of empty labelings")
    _, ia = np.unique(np.asarray(labels_a, dtype=object).astype(str), return_inverse=True)
    _, ib = np.unique(np.asarray(labels_b, dtype=object).astype(str), return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1.0)
    ha, hb = _entropy(table.sum(axis=1), n), _entropy(table.sum(axis=0), n)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    nz = table > 0
    terms = (table[nz] / n) * np.log(table[nz] * n / outer[nz])
    # fsum is exactly rounded, so the result does not depend on term order
    mi = math.fsum(sorted(terms.tolist()))
    return float(min(1.0, max(0.0, mi / ((ha + hb) / 2.0))))


def neighbor_radius(emb, k: int) -> float:
    """Median distance to the k-th nearest other point, a label-free clustering radius."""
    X = _vectors(emb)
    if not 1 <= k < X.shape[0]:
        raise ConfigError(f"k must satisfy 1 <= k < n = {X.shape[0]}, got {k}")
    D = pairwise_distances(X)
    np.fill_diagonal(D, np.inf)
    return float(np.median(np.sort(D, axis=1)[:, k - 1]))


def cluster_radius(emb, min_cluster_size: int) -> float:
    """Default radius for ``density_cluster``: ``neighbor_radius`` at twice the minimum cluster size."""
    n = _vectors(emb).shape[0]
    return neighbor_radius(emb, max(1, min(2 * min_cluster_size, n - 1)))


def density_cluster(emb, min_cluster_size: int, radius: float, min_samples: int = 1) -> np.ndarray:
    """Density-connected components of the ``radius`` neighbourhood graph.

    Points with at least ``min_samples`` neighbours within ``radius`` (self
    included) are core points; core points within ``radius`` of each other
    share a cluster and every other point joins its nearest core neighbour.
    Clusters smaller than ``min_cluster_size`` become noise (-1). Cluster ids
    follow the order in which clusters first appear.
    """
    if min_cluster_size < 2:
        raise ConfigError("min_cluster_size must be >= 2")
    if radius <= 0:
        raise ConfigError("radius must be positive")
    X = _vectors(emb)
    n = X.shape[0]
    D = pairwise_distances(X)
    adj = D <= radius
    core = adj.sum(axis=1) >= min_samples
    comp = np.full(n, -1)
    next_id = 0
    for start in range(n):
        if not core[start] or comp[start] >= 0:
            continue
        stack = [start]
        comp[start] = next_id
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adj[i] & core):
                if comp[j] < 0:
                    comp[j] = next_id
                    stack.append(j)
        next_id += 1
    for i in np.flatnonzero(~core):
        near = np.flatnonzero(adj[i] & core)
        if near.size:
            comp[i] = comp[near[np.argmin(D[i, near])]]
    sizes = np.bincount(comp[comp >= 0], minlength=next_id)
    labels = np.full(n, -1)
    relabel: dict[int, int] = {}
    for i in range(n):
        c = comp[i]
        if c >= 0 and sizes[c] >= min_cluster_size:
            labels[i] = relabel.setdefault(c, len(relabel))
    return labels


def silhouette(emb, labels: Sequence[Hashable]) -> float:
    """Mean silhouette coefficient; members of singleton clusters score 0."""
    X = _vectors(emb)
    labels = np.asarray([str(l) for l in labels])
    if len(labels) != X.shape[0]:
        raise DimensionError("labels must align with the embedding rows")
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise UndefinedMetricError("silhouette needs at least two clusters")
    D = pairwise_distances(X)
    s = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        same = labels == labels[i]
        if same.sum() == 1:
            continue
        a = D[i, same].sum() / (same.sum() - 1)
        b = min(D[i, labels == c].mean() for c in uniq if c != labels[i])
        denom = max(a, b)
        s[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(s.mean())


def accuracy(preds: Sequence[Hashable], truths: Sequence[Hashable]) -> float:
    if len(preds) != len(truths):
        raise DimensionError(f"{len(preds)} predictions for {len(truths)} truths")
    if not preds:
        raise UndefinedMetricError("accuracy of an empty list")
    return sum(p == t for p, t in zip(preds, truths)) / len(preds)


# ------------------------------------------------------------------ reports


@dataclass(frozen=True)
class MetricReport:
    metric: str
    value: float
    n: int
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def write_reports(reports: Sequence[MetricReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rep in reports:
            fh.write(rep.to_json() + "\n")


def write_table(path: str | Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
