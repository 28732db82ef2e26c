"""Independent brute-force reference implementations used as test oracles."""

import math
from collections import Counter


def euclid(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def knn_scores(points, k):
    out = []
    for i, p in enumerate(points):
        d = sorted(euclid(p, q) for j, q in enumerate(points) if j != i)
        out.append(d[k - 1])
    return out


def auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y != 1]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def _entropy(labels):
    n = len(labels)
    return -sum(c / n * math.log(c / n) for c in Counter(labels).values())


def nmi(a, b):
    n = len(a)
    ha, hb = _entropy(a), _entropy(b)
    if ha == 0 and hb == 0:
        return 1.0
    ca, cb, joint = Counter(a), Counter(b), Counter(zip(a, b))
    mi = sum(c / n * math.log(c * n / (ca[x] * cb[y])) for (x, y), c in joint.items())
    return min(1.0, max(0.0, mi / ((ha + hb) / 2)))


def silhouette(points, labels):
    total = 0.0
    for i, p in enumerate(points):
        own = [j for j in range(len(points)) if labels[j] == labels[i] and j != i]
        if not own:
            continue
        a = sum(euclid(p, points[j]) for j in own) / len(own)
        b = math.inf
        for other in set(labels) - {labels[i]}:
            members = [j for j in range(len(points)) if labels[j] == other]
            b = min(b, sum(euclid(p, points[j]) for j in members) / len(members))
        if max(a, b) > 0:
            total += (b - a) / max(a, b)
    return total / len(points)


def accuracy(preds, truths):
    return sum(p == t for p, t in zip(preds, truths)) / len(preds)
