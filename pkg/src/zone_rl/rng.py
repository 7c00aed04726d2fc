"""Seeded random streams with named, independent substreams.

Every stochastic component (process noise, meals, level decay, each policy,
the shield) draws from its own child stream derived from one master seed.
This keeps trajectories bit-reproducible even when two otherwise-identical
runs differ in *which* subsystems happen to draw (e.g. a run that never
activates the long modality consumes exactly the same process-noise draws as
one that would).
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_key(tag: str) -> int:
    """Stable 32-bit key for a substream tag (platform/run independent)."""
    digest = hashlib.blake2s(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


class RngStream:
    """A named PCG64 stream with a draw counter.

    Identical (seed, path) always reproduces the identical draw sequence.
    ``child(tag)`` derives an independent stream; children with the same tag
    are identical across runs.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()) -> None:
        if not isinstance(seed, (int, np.integer)):
            raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=self.path))
        )
        self.draws = 0

    def child(self, tag: str) -> "RngStream":
        return RngStream(self.seed, self.path + (_tag_key(tag),))

    # -- draw primitives -------------------------------------------------

    def normal(self, size: int | None = None) -> float | np.ndarray:
        self.draws += 1 if size is None else int(size)
        return self._gen.standard_normal() if size is None else self._gen.standard_normal(size)

    def random(self) -> float:
        self.draws += 1
        return float(self._gen.random())

    def uniform(self, low: float, high: float) -> float:
        self.draws += 1
        return float(self._gen.uniform(low, high))

    def integers(self, low: int, high: int) -> int:
        """One integer in [low, high)."""
        self.draws += 1
        return int(self._gen.integers(low, high))

    def choice_index(self, probabilities: "np.ndarray | list[float]") -> int:
        """Sample an index from a probability vector (inverse-CDF on one uniform)."""
        p = np.asarray(probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probability vector must be 1-D and non-empty")
        if not np.isclose(p.sum(), 1.0, atol=1e-9):
            raise ValueError(f"probabilities sum to {p.sum()!r}, expected 1")
        u = self.random()
        return int(np.searchsorted(np.cumsum(p), u, side="right").clip(0, p.size - 1))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"RngStream(seed={self.seed}, path={self.path}, draws={self.draws})"
