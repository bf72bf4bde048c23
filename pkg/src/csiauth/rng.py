"""Seeded random-number streams with stable, label-derived sub-streams."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream: same (seed, stream_id) -> same draws.

    Independent sub-streams are derived by hashing human-readable labels,
    so parallel generation order cannot change results.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(ss)

    def substream(self, *labels) -> "RngStream":
        """Derive an independent stream keyed by (stream_id, *labels)."""
        return RngStream(self.seed, _stable_id(self.stream_id, *labels))


def _stable_id(*labels) -> int:
    # Python's hash() is salted per process; sha256 keeps ids stable across runs.
    tag = "\x1f".join(_canon(x) for x in labels).encode()
    return int.from_bytes(hashlib.sha256(tag).digest()[:8], "big")


def _canon(x) -> str:
    if isinstance(x, float) and x == int(x):
        return str(int(x))
    return str(x)
