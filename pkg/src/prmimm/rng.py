"""Reproducible random streams.

A master seed fans out into named child streams. Children are keyed by a
blake2b digest of ``(parent stream id, tags)`` so a component's draws depend
only on its tag path, never on how many other components ran first or on
how work was split across threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK63 = (1 << 63) - 1


def _tag_bytes(tag) -> bytes:
    if isinstance(tag, (int, np.integer)):
        return b"i" + int(tag).to_bytes(16, "little", signed=True)
    return b"s" + str(tag).encode("utf-8")


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def child(self, *tags) -> "RngStream":
        h = hashlib.blake2b(digest_size=8)
        h.update(self.stream_id.to_bytes(8, "little"))
        for tag in tags:
            h.update(_tag_bytes(tag))
        return RngStream(self.seed, int.from_bytes(h.digest(), "little") & _MASK63)

    def generator(self) -> np.random.Generator:
        """Fresh generator; identical (seed, stream_id) gives identical draws."""
        ss = np.random.SeedSequence(self.seed & ((1 << 64) - 1), spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))


def as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(int(rng))
