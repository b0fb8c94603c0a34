"""Reproducible random streams keyed by ``(seed, stream_id)``.

Each stream wraps a Philox counter-based generator seeded through
``numpy.random.SeedSequence``. Child streams are derived by appending to the
spawn key, so no two derivation paths share state.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """A reproducible stream of draws.

    >>> a = RngStream(7, 3)
    >>> b = RngStream(7, 3)
    >>> a.generator.random() == b.generator.random()
    True
    """

    __slots__ = ("seed", "stream_id", "path", "generator")

    def __init__(self, seed: int, stream_id: int = 0, path: tuple[int, ...] = ()):
        if not 0 <= seed < 2**64 or not 0 <= stream_id < 2**64:
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, label: int) -> "RngStream":
        """Independent sub-stream; the same label always yields the same stream."""
        return RngStream(self.seed, self.stream_id, (*self.path, label))

    @property
    def counter(self) -> int:
        """The 256-bit Philox counter, packed into one integer."""
        words = self.generator.bit_generator.state["state"]["counter"]
        out = 0
        for i, w in enumerate(words):
            out |= int(w) << (64 * i)
        return out

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"
