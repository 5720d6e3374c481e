"""Deterministic, splittable random-number streams.

A stream is identified by a 64-bit master seed plus a tuple of integer
labels.  Identical (seed, labels) pairs always reproduce the same draws,
and streams with distinct labels are statistically independent, so
replicates of an experiment can run on any number of workers and still
produce byte-identical results.

Backed by numpy's counter-based Philox generator keyed through
``SeedSequence(master_seed, spawn_key=labels)``.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """A deterministic random stream addressed by (master_seed, labels)."""

    __slots__ = ("master_seed", "labels", "_gen")

    def __init__(self, master_seed: int, labels: tuple[int, ...] = ()):
        self.master_seed = int(master_seed)
        self.labels = tuple(int(l) for l in labels)
        self._gen: np.random.Generator | None = None

    @property
    def gen(self) -> np.random.Generator:
        """The underlying numpy generator (created lazily)."""
        if self._gen is None:
            seq = np.random.SeedSequence(self.master_seed, spawn_key=self.labels)
            self._gen = np.random.Generator(np.random.Philox(seq))
        return self._gen

    def derive(self, *labels: int) -> "RngStream":
        """Return an independent child stream with extra labels appended."""
        return RngStream(self.master_seed, self.labels + tuple(int(l) for l in labels))

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, labels={self.labels})"
