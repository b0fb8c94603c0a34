"""Ranked mass partitions with an explicit unresolved remainder."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

_SUM_TOL = 1e-9


def rank(parts: np.ndarray) -> np.ndarray:
    """Sort nonincreasing; equal masses keep their draw order."""
    parts = np.asarray(parts, dtype=float)
    return parts[np.argsort(-parts, kind="stable")]


@dataclass(frozen=True)
class MassPartition:
    """Masses ``parts`` (nonincreasing) plus ``remainder`` summing to ``total``.

    ``resolved`` is the number of leading parts known to be the true largest
    ones, or ``None`` when every part is exact (no dust was cut). A partition
    cut at dust level ``d`` certifies every part larger than ``d``.
    """

    parts: np.ndarray
    remainder: float
    total: float
    resolved: int | None = field(default=None, compare=False)

    def __post_init__(self):
        parts = np.asarray(self.parts, dtype=float)
        parts.setflags(write=False)
        object.__setattr__(self, "parts", parts)
        if parts.ndim != 1:
            raise ValueError("parts must be one-dimensional")
        if parts.size and (parts.min() <= 0 or np.any(np.diff(parts) > 0)):
            raise ValueError("parts must be positive and nonincreasing")
        if self.remainder < 0 or self.total <= 0:
            raise ValueError("remainder must be >= 0 and total > 0")
        gap = abs(float(parts.sum()) + self.remainder - self.total)
        if gap > _SUM_TOL * max(1.0, self.total):
            raise ValueError(f"parts + remainder miss total by {gap:.3e}")

    @classmethod
    def from_unsorted(cls, parts, remainder: float, total: float, resolved: int | None = None):
        parts = np.asarray(parts, dtype=float)
        return cls(rank(parts[parts > 0]), float(remainder), float(total), resolved)

    def largest(self, k: int = 1) -> float:
        """The k-th largest part (1-based), or 0 when there are fewer parts."""
        return float(self.parts[k - 1]) if self.parts.size >= k else 0.0

    def scaled(self, factor: float) -> "MassPartition":
        return MassPartition(self.parts * factor, self.remainder * factor, self.total * factor, self.resolved)

    def sum_of_powers(self, p: float) -> float:
        return float(np.sum(self.parts**p))

    def to_record(self, t: float | None = None, stream_id: int | None = None) -> dict:
        return {
            "t": t,
            "parts": [float(x) for x in self.parts],
            "remainder": float(self.remainder),
            "total": float(self.total),
            "stream_id": stream_id,
        }

    def to_jsonl(self, t: float | None = None, stream_id: int | None = None) -> str:
        # repr of a float round-trips exactly (at most 17 significant digits)
        return json.dumps(self.to_record(t, stream_id))

    @classmethod
    def from_record(cls, rec: dict) -> "MassPartition":
        return cls(np.array(rec["parts"], dtype=float), float(rec["remainder"]), float(rec["total"]))
