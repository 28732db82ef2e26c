"""Seeded, splittable random streams.

Every stream is numpy's Philox-4x64-10 counter-based generator, keyed through
``numpy.random.SeedSequence(seed, spawn_key=path)``. A child stream appends the
CRC32 of its name to the parent's path, so sub-seeds depend only on the root
seed and the sequence of names used to derive them.
"""

from __future__ import annotations

import zlib

import numpy as np

U64_MAX = 2**64 - 1


class Rng:
    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if not 0 <= int(seed) <= U64_MAX:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def child(self, name: str) -> "Rng":
        return Rng(self.seed, self.path + (zlib.crc32(name.encode("utf-8")),))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def random(self, size=None):
        return self.gen.random(size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def choice(self, a, size=None, replace=True, p=None):
        return self.gen.choice(a, size=size, replace=replace, p=p)

    def dirichlet(self, alpha, size=None):
        return self.gen.dirichlet(alpha, size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"
