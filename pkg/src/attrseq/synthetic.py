"""Planted synthetic corpora, feedback pairs and dataset splits."""

from __future__ import annotations

from typing import Sequence, TypeVar

import numpy as np

from .data import AttributeField, AttributeSchema, AttributedSequence, Dataset, FeedbackTriplet, Vocabulary
from .errors import ConfigError
from .numerics import Rng

T = TypeVar("T")

OUTLIER_LABEL = "outlier"


class MarkovChain:
    """First-order chain over a subset of the item vocabulary."""

    def __init__(self, support: np.ndarray, start: np.ndarray, transitions: np.ndarray):
        self.support = support
        self.start = start
        self.transitions = transitions

    @classmethod
    def random(cls, rng: Rng, support: np.ndarray, concentration: float) -> "MarkovChain":
        k = len(support)
        alpha = np.full(k, concentration)
        return cls(np.asarray(support), rng.dirichlet(alpha), rng.dirichlet(alpha, size=k))

    def sample(self, rng: Rng, length: int) -> list[int]:
        if length == 0:
            return []
        state = rng.choice(len(self.support), p=self.start)
        out = [int(self.support[state])]
        for _ in range(length - 1):
            state = rng.choice(len(self.support), p=self.transitions[state])
            out.append(int(self.support[state]))
        return out


def generate_synthetic(
    rng: Rng,
    n_classes: int,
    per_class: int,
    u: int = 11,
    r: int = 288,
    len_range: tuple[int, int] = (12, 24),
    noise: float = 0.0,
    *,
    support: int | None = None,
    shared_chain: bool = False,
    concentration: float = 0.5,
    attr_jitter: float = 0.0,
    n_outliers: int = 0,
) -> Dataset:
    """Labeled corpus with one attribute prototype and one Markov chain per class.

    Each attribute entry and each sequence item is independently replaced by a
    uniform random value with probability ``noise``. Class supports are
    disjoint whenever ``n_classes * support <= r``. With ``shared_chain`` all
    classes draw sequences from the same chain, so only attributes carry the
    class. ``n_outliers`` extra records come from one more prototype/chain and
    are labeled ``"outlier"``.
    """
    lo, hi = len_range
    if lo > hi or lo < 0:
        raise ConfigError(f"empty length range {len_range}")
    if n_classes < 1 or per_class < 0 or u < 0 or r < 1:
        raise ConfigError("n_classes and r must be >= 1, per_class and u >= 0")
    if not 0.0 <= noise <= 1.0:
        raise ConfigError(f"noise must lie in [0, 1], got {noise}")
    n_groups = n_classes + (1 if n_outliers else 0)
    support = support or max(2, r // n_groups)
    support = min(support, r)

    proto_rng, chain_rng, rec_rng = rng.child("prototypes"), rng.child("chains"), rng.child("records")
    prototypes = proto_rng.random((n_groups, u))
    if n_groups * support <= r:
        perm = chain_rng.permutation(r)
        supports = [np.sort(perm[k * support:(k + 1) * support]) for k in range(n_groups)]
    else:
        supports = [np.sort(chain_rng.choice(r, size=support, replace=False)) for _ in range(n_groups)]
    if shared_chain:
        chain = MarkovChain.random(chain_rng, supports[0], concentration)
        chains = [chain] * n_groups
    else:
        chains = [MarkovChain.random(chain_rng, s, concentration) for s in supports]

    records = []
    plan = [(c, f"c{c}", per_class) for c in range(n_classes)]
    if n_outliers:
        plan.append((n_classes, OUTLIER_LABEL, n_outliers))
    for group, label, count in plan:
        for _ in range(count):
            attrs = prototypes[group].copy()
            if attr_jitter:
                attrs = np.clip(attrs + rec_rng.normal(0.0, attr_jitter, u), 0.0, 1.0)
            swap = rec_rng.random(u) < noise
            attrs[swap] = rec_rng.random(int(swap.sum()))
            length = int(rec_rng.integers(lo, hi + 1))
            seq = chains[group].sample(rec_rng, length)
            for t in range(length):
                if rec_rng.random() < noise:
                    seq[t] = int(rec_rng.integers(0, r))
            records.append(AttributedSequence(f"s{len(records):05d}", attrs, tuple(seq), label))

    vocab = Vocabulary(tuple(f"e{k}" for k in range(r)))
    schema = AttributeSchema(tuple(AttributeField(f"a{j}", "numeric", 0.0, 1.0) for j in range(u)))
    return Dataset(vocab, u, tuple(records), schema)


def make_feedback(dataset: Dataset, rng: Rng, n_pairs: int) -> list[FeedbackTriplet]:
    """Balanced pairs from class labels: label 0 = same class, 1 = different."""
    if n_pairs < 2:
        raise ConfigError("n_pairs must be at least 2")
    by_class: dict[str, list[str]] = {}
    for rec in dataset.records:
        if rec.label is not None:
            by_class.setdefault(rec.label, []).append(rec.id)
    classes = list(by_class)
    if len(classes) < 2:
        raise ConfigError("feedback generation needs at least two classes")
    multi = [c for c in classes if len(by_class[c]) >= 2]
    if not multi:
        raise ConfigError("no class has two records to form a similar pair")

    n_dissimilar = n_pairs // 2
    out = []
    for _ in range(n_pairs - n_dissimilar):
        members = by_class[multi[int(rng.integers(0, len(multi)))]]
        a, b = rng.choice(len(members), size=2, replace=False)
        out.append(FeedbackTriplet(members[a], members[b], 0))
    for _ in range(n_dissimilar):
        ca, cb = rng.choice(len(classes), size=2, replace=False)
        left = by_class[classes[ca]][int(rng.integers(0, len(by_class[classes[ca]])))]
        right = by_class[classes[cb]][int(rng.integers(0, len(by_class[classes[cb]])))]
        out.append(FeedbackTriplet(left, right, 1))
    return [out[k] for k in rng.permutation(len(out))]


def split_items(items: Sequence[T], fraction: float, rng: Rng) -> tuple[list[T], list[T]]:
    """Seeded shuffle split; the second part holds ``round(fraction * n)`` items."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
    perm = rng.permutation(len(items))
    n_held = int(round(fraction * len(items)))
    held = [items[k] for k in perm[:n_held]]
    kept = [items[k] for k in perm[n_held:]]
    return kept, held


def split_train_validation(dataset: Dataset, fraction: float, rng: Rng) -> tuple[Dataset, Dataset]:
    train, val = split_items(dataset.records, fraction, rng)
    return dataset.subset(train), dataset.subset(val)


def split_classes_for_oneshot(dataset: Dataset, train_fraction: float, rng: Rng) -> tuple[Dataset, Dataset]:
    """Partition by class so training and one-shot classes are disjoint."""
    classes = dataset.classes()
    if len(classes) < 2:
        raise ConfigError("one-shot split needs at least two classes")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = min(max(int(round(train_fraction * len(classes))), 1), len(classes) - 1)
    perm = rng.permutation(len(classes))
    train_classes = {classes[k] for k in perm[:n_train]}
    train = [rec for rec in dataset.records if rec.label in train_classes]
    oneshot = [rec for rec in dataset.records if rec.label is not None and rec.label not in train_classes]
    return dataset.subset(train), dataset.subset(oneshot)


def make_gallery(dataset: Dataset, rng: Rng) -> tuple[list[AttributedSequence], list[AttributedSequence]]:
    """Pick one random record per class as the gallery; the rest are queries."""
    gallery, chosen = [], set()
    for label in dataset.classes():
        members = [rec for rec in dataset.records if rec.label == label]
        pick = members[int(rng.integers(0, len(members)))]
        gallery.append(pick)
        chosen.add(pick.id)
    queries = [rec for rec in dataset.records if rec.id not in chosen]
    return gallery, queries
