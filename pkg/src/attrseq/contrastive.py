"""Pairwise contrastive objective shared by the metric-learning and one-shot networks.

Label convention: 0 marks a similar pair, 1 a dissimilar pair. Similar pairs
are pulled together by ``dist**2 / 2``; dissimilar pairs are pushed apart
until they are at least ``margin`` away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import AttributedSequence, Dataset, FeedbackTriplet
from .errors import ConfigError, EmptySequenceError, NumericalError


def contrastive_loss(dist: float, label: int, margin: float) -> float:
    if margin <= 0:
        raise ConfigError(f"margin must be positive, got {margin}")
    if dist < 0:
        raise ConfigError(f"distance must be non-negative, got {dist}")
    gap = max(0.0, margin - dist)
    return 0.5 * (1 - label) * dist**2 + 0.5 * label * gap**2


def contrastive_dloss(dist: float, label: int, margin: float) -> float:
    """Derivative of :func:`contrastive_loss` with respect to ``dist``."""
    return (1 - label) * dist - label * max(0.0, margin - dist)


def distance_grad(a: np.ndarray, b: np.ndarray, mode: str = "exact") -> np.ndarray:
    """d||a - b|| / da (the gradient w.r.t. ``b`` is its negation).

    ``mode="exact"`` is the calculus derivative ``diff / ||diff||`` (zero at
    coincident points). ``mode="sigmoid-style"`` is the alternative
    ``diff * (1 - diff)`` form, kept for comparison runs.
    """
    diff = a - b
    if mode == "exact":
        norm = float(np.linalg.norm(diff))
        return diff / norm if norm > 0 else np.zeros_like(diff)
    if mode == "sigmoid-style":
        return diff * (1.0 - diff)
    raise ConfigError(f"unknown distance gradient mode {mode!r}")


@dataclass(frozen=True)
class LabeledPair:
    left: AttributedSequence
    right: AttributedSequence
    label: int

    @property
    def key(self) -> tuple[str, str]:
        return (self.left.id, self.right.id)


@dataclass(frozen=True)
class FeedbackBatch:
    pairs: tuple[LabeledPair, ...]

    def __post_init__(self):
        if not self.pairs:
            raise ConfigError("feedback batch is empty")
        for p in self.pairs:
            if p.label not in (0, 1):
                raise ConfigError(f"feedback label must be 0 or 1, got {p.label!r}")
            for rec in (p.left, p.right):
                if len(rec.sequence) == 0:
                    raise EmptySequenceError(f"record {rec.id} has an empty sequence")

    @classmethod
    def resolve(cls, dataset: Dataset, triplets: list[FeedbackTriplet]) -> "FeedbackBatch":
        return cls(tuple(LabeledPair(dataset[t.left_id], dataset[t.right_id], t.label) for t in triplets))

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def as_batch(pairs) -> FeedbackBatch:
    if isinstance(pairs, FeedbackBatch):
        return pairs
    return FeedbackBatch(tuple(p if isinstance(p, LabeledPair) else LabeledPair(*p) for p in pairs))


def check_finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericalError(f"{what} became non-finite")
    return value
