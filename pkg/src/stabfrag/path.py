"""Exact algebra on truncated spectrally positive Lévy paths.

A path is a compensator drift plus finitely many upward jumps. Between jumps
it is linear, so running infima, passage times and return times are solved in
closed form on segments. Each jump carries an exponential mark clock; at
level ``t`` a jump of size ``z`` is marked when ``clock < t*z``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .errors import (
    ContractError,
    DegenerateInputError,
    DomainError,
    GeometryError,
    NotReachedError,
    PreconditionError,
    UnsupportedPathError,
)
from .partition import MassPartition

RETURN_TOL = 1e-9
VERVAAT_TIE_TOL = 1e-12


@dataclass(frozen=True)
class JumpLedger:
    """Jumps ``(times[i], mags[i], clocks[i])`` on ``[0, horizon]`` plus a drift."""

    times: np.ndarray
    mags: np.ndarray
    clocks: np.ndarray
    horizon: float
    drift_rate: float

    def __post_init__(self):
        arrs = []
        for name in ("times", "mags", "clocks"):
            a = np.ascontiguousarray(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrs.append(a)
        times, mags, clocks = arrs
        if not (times.shape == mags.shape == clocks.shape) or times.ndim != 1:
            raise ValueError("times, mags and clocks must be 1-d arrays of equal length")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("jump times must be strictly increasing")
            if times[0] < 0 or times[-1] > self.horizon:
                raise ValueError("jump times must lie in [0, horizon]")
            if mags.min() <= 0:
                raise ValueError("jump magnitudes must be positive")

    @classmethod
    def empty(cls, horizon: float, drift_rate: float) -> "JumpLedger":
        z = np.zeros(0)
        return cls(z, z, z, horizon, drift_rate)

    @property
    def n(self) -> int:
        return int(self.times.size)

    @property
    def entries(self) -> list[tuple[float, float, float]]:
        return list(zip(self.times.tolist(), self.mags.tolist(), self.clocks.tolist()))

    def cumulative(self) -> np.ndarray:
        """``S[k]`` = total jump mass of the first ``k`` jumps (length n+1)."""
        out = np.empty(self.n + 1)
        out[0] = 0.0
        np.cumsum(self.mags, out=out[1:])
        return out

    def pre_jump_values(self) -> np.ndarray:
        """Left limits ``X(tau_i-)``."""
        return self.drift_rate * self.times + self.cumulative()[:-1]

    def marked(self, t: float) -> np.ndarray:
        return self.clocks < t * self.mags

    def select(self, keep: np.ndarray) -> "JumpLedger":
        return JumpLedger(self.times[keep], self.mags[keep], self.clocks[keep], self.horizon, self.drift_rate)

    def to_record(self) -> dict:
        return {
            "horizon": float(self.horizon),
            "drift_rate": float(self.drift_rate),
            "entries": [{"t": t, "mag": m, "clock": c} for t, m, c in self.entries],
        }

    def to_jsonl(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def from_record(cls, rec: dict) -> "JumpLedger":
        ent = rec["entries"]
        return cls(
            np.array([e["t"] for e in ent], dtype=float),
            np.array([e["mag"] for e in ent], dtype=float),
            np.array([e["clock"] for e in ent], dtype=float),
            float(rec["horizon"]),
            float(rec["drift_rate"]),
        )

    @classmethod
    def from_jsonl(cls, line: str) -> "JumpLedger":
        return cls.from_record(json.loads(line))


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    owner_jump: int

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class IntervalForest:
    """Laminar family of marked intervals, sorted by left end.

    ``parent[k]`` is the index of the tightest interval enclosing interval
    ``k``, or -1. ``t`` and ``n_jumps`` record the ledger the forest came from.
    """

    lo: np.ndarray
    hi: np.ndarray
    owner: np.ndarray
    parent: np.ndarray
    t: float = field(default=float("nan"))
    n_jumps: int = -1

    @property
    def intervals(self) -> list[Interval]:
        return [Interval(float(a), float(b), int(o)) for a, b, o in zip(self.lo, self.hi, self.owner)]

    def __len__(self) -> int:
        return int(self.lo.size)

    def maximal(self) -> np.ndarray:
        return self.parent < 0


def _require_decreasing(path: JumpLedger):
    if not path.drift_rate < 0:
        raise UnsupportedPathError("exact envelope algebra needs a strictly negative drift")


def evaluate(path: JumpLedger, s, left: bool = False):
    """Value of the path at ``s`` (right-continuous; ``left=True`` gives ``X(s-)``)."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(s_arr > path.horizon):
        raise DomainError("evaluation time outside [0, horizon]")
    side = "left" if left else "right"
    k = np.searchsorted(path.times, s_arr, side=side)
    out = path.drift_rate * s_arr + path.cumulative()[k]
    return float(out) if out.ndim == 0 else out


@numba.njit(cache=True)
def _next_lower(v):
    # index of the first later entry with v[k] <= v[i], or n if none
    n = v.shape[0]
    out = np.full(n, n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    top = 0
    for i in range(n - 1, -1, -1):
        while top > 0 and v[stack[top - 1]] > v[i]:
            top -= 1
        if top > 0:
            out[i] = stack[top - 1]
        stack[top] = i
        top += 1
    return out


def return_times(path: JumpLedger) -> np.ndarray:
    """For every jump, the first later time the path is back at its pre-jump level.

    Times past the horizon are extrapolated on the final linear segment.
    """
    _require_decreasing(path)
    v = path.pre_jump_values()
    nxt = _next_lower(v)
    cum = path.cumulative()
    # hit on the segment just before jump nxt (or the final segment)
    return (v - cum[nxt]) / path.drift_rate


def _records(v: np.ndarray) -> np.ndarray:
    # jumps whose pre-jump value is a strict new minimum (start value 0 counts)
    if v.size == 0:
        return np.zeros(0, dtype=bool)
    prev = np.minimum.accumulate(np.concatenate(([np.inf], v[:-1])))
    return (v < np.minimum(prev, 0.0)) | (np.arange(v.size) == 0)


def infimum_constancy(path: JumpLedger, upto: float) -> list[tuple[Interval, float]]:
    """Constancy intervals of the running infimum on ``[0, upto]`` with their levels."""
    lo, hi, owner, level = constancy_arrays(path, upto)
    return [(Interval(float(a), float(b), int(o)), float(l)) for a, b, o, l in zip(lo, hi, owner, level)]


def constancy_arrays(path: JumpLedger, upto: float):
    """Array form of :func:`infimum_constancy`: ``(lo, hi, owner, level)``."""
    _require_decreasing(path)
    if not 0 < upto <= path.horizon * (1 + 1e-15):
        raise DomainError("upto must lie in (0, horizon]")
    v = path.pre_jump_values()
    rec = _records(v) & (path.times < upto)
    idx = np.flatnonzero(rec)
    sig = return_times(path)[idx]
    return path.times[idx], np.minimum(sig, upto), idx, v[idx]


def first_passage(path: JumpLedger, level: float) -> float:
    """First time the path goes strictly below ``level`` (< 0)."""
    _require_decreasing(path)
    if not level < 0:
        raise DomainError("passage level must be negative")
    v = path.pre_jump_values()
    below = np.flatnonzero(v < level)
    cum = path.cumulative()
    if below.size:
        k = below[0]
        return float((level - cum[k]) / path.drift_rate)
    s = (level - cum[-1]) / path.drift_rate
    # a passage ledger ends exactly at its passage time, up to rounding
    if s <= path.horizon * (1.0 + 1e-12):
        return float(min(s, path.horizon))
    inf = min(float(v.min()) if v.size else 0.0, path.drift_rate * path.horizon + cum[-1], 0.0)
    raise NotReachedError("no passage below the level before the horizon", inf)


def remove_marked(path: JumpLedger, t: float) -> JumpLedger:
    """The path with every jump marked at level ``t`` deleted."""
    if t < 0:
        raise DomainError("mark level must be nonnegative")
    return path.select(~path.marked(t))


@numba.njit(cache=True)
def _parents(lo, hi):
    n = lo.shape[0]
    par = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    top = 0
    for k in range(n):
        while top > 0 and hi[stack[top - 1]] <= lo[k]:
            top -= 1
        if top > 0:
            par[k] = stack[top - 1]
        stack[top] = k
        top += 1
    return par


def marked_interval_forest(path: JumpLedger, t: float, upto: float) -> IntervalForest:
    """Intervals from each marked jump to the first return to its pre-jump level."""
    _require_decreasing(path)
    idx = np.flatnonzero(path.marked(t) & (path.times < upto))
    lo = path.times[idx]
    hi = np.minimum(return_times(path)[idx], upto)
    return IntervalForest(lo, hi, idx, _parents(lo, hi), float(t), path.n)


@numba.njit(cache=True)
def _components(times, v, sig, owner, hi, parent, upto):
    n = times.shape[0]
    m = owner.shape[0]
    which = np.full(n, -1, dtype=np.int64)
    for k in range(m):
        which[owner[k]] = k
    masses = np.empty(n + 1)
    nm = 0
    dust = 0.0
    root = upto
    for k in range(m):
        if parent[k] < 0:
            root -= hi[k] - times[owner[k]]
    masses[nm] = root
    nm += 1
    for k in range(m):
        i = owner[k]
        end = hi[k]
        covered = 0.0
        cur_min = np.inf
        cur = -1.0
        cur_end = 0.0
        j = i + 1
        while j < n and times[j] < end:
            if v[j] < cur_min:
                if cur >= 0.0:
                    masses[nm] = cur
                    nm += 1
                cur_min = v[j]
                cur_end = min(sig[j], end)
                cur = cur_end - times[j]
                covered += cur
            c = which[j]
            if c >= 0 and parent[c] == k:
                cur -= hi[c] - times[j]
            j += 1
        if cur >= 0.0:
            masses[nm] = cur
            nm += 1
        dust += (end - times[i]) - covered
    return masses[:nm], dust


def component_masses(forest: IntervalForest, path: JumpLedger, upto: float) -> MassPartition:
    """Masses of the root component and of every hub sub-component.

    Strict-decrease time inside marked intervals (zero in the continuum limit)
    goes to the remainder, so parts plus remainder equal ``upto``.
    """
    if forest.n_jumps != path.n or np.any(forest.owner >= path.n):
        raise ContractError("forest was not built from this path")
    if len(forest):
        if not np.array_equal(path.times[forest.owner], forest.lo):
            raise ContractError("forest left ends are not jump times of this path")
        if not np.all(path.marked(forest.t)[forest.owner]):
            raise ContractError("forest owners are not marked at the forest level")
        if int(np.count_nonzero(path.marked(forest.t) & (path.times < upto))) != len(forest):
            raise ContractError("forest does not contain every marked jump before upto")
    v = path.pre_jump_values()
    sig = return_times(path)
    masses, dust = _components(path.times, v, sig, forest.owner, forest.hi, forest.parent, float(upto))
    # cancellation can leave zero-mass components at rounding level
    keep = masses > 1e-14 * upto
    dust += float(masses[~keep].sum())
    return MassPartition.from_unsorted(masses[keep], max(dust, 0.0), upto)


def vervaat(path: JumpLedger) -> JumpLedger:
    """Rotate a bridge-like path at the time of its minimum."""
    end = evaluate(path, path.horizon)
    if abs(end) > 1e-9:
        raise PreconditionError(f"path must end at 0 (ends at {end:.3e})")
    v = path.pre_jump_values()
    # candidates: start value 0 and every pre-jump value strictly after time 0
    cand = np.concatenate(([0.0], v[path.times > 0]))
    order = np.argsort(cand, kind="stable")
    if cand.size > 1 and cand[order[1]] - cand[order[0]] <= VERVAAT_TIE_TOL:
        raise DegenerateInputError("minimum is not unique within tolerance")
    if order[0] == 0:
        return path
    k = int(np.flatnonzero(path.times > 0)[order[0] - 1])
    tk = path.times[k]
    times = np.concatenate((path.times[k:] - tk, path.times[:k] + (path.horizon - tk)))
    mags = np.concatenate((path.mags[k:], path.mags[:k]))
    clocks = np.concatenate((path.clocks[k:], path.clocks[:k]))
    return JumpLedger(times, mags, clocks, path.horizon, path.drift_rate)


def _maximal_family(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    keep = []
    reach = -np.inf
    last = -1
    for k in range(lo.size):
        if lo[k] < reach:
            if hi[k] > reach:
                raise GeometryError(
                    f"intervals [{lo[last]}, {hi[last]}] and [{lo[k]}, {hi[k]}] overlap without nesting"
                )
            continue
        if last >= 0 and lo[k] <= reach:
            raise GeometryError(f"intervals [{lo[last]}, {hi[last]}] and [{lo[k]}, {hi[k]}] are not separated")
        keep.append(k)
        last, reach = k, hi[k]
    return order[np.array(keep, dtype=np.int64)]


def unplug(path: JumpLedger, intervals: Sequence[Interval]) -> JumpLedger:
    """Excise the maximal intervals of a laminar family and glue the path shut."""
    if len(intervals) == 0:
        return path
    lo = np.array([iv.lo for iv in intervals], dtype=float)
    hi = np.array([iv.hi for iv in intervals], dtype=float)
    if np.any(hi <= lo) or lo.min() < 0 or hi.max() > path.horizon:
        raise GeometryError("intervals must satisfy 0 <= lo < hi <= horizon")
    top = _maximal_family(lo, hi)
    a, b = lo[top], hi[top]
    k_lo = np.searchsorted(path.times, a, side="left")
    k_hi = np.searchsorted(path.times, b, side="right")
    inside = np.zeros(path.n + 1, dtype=np.int64)
    np.add.at(inside, k_lo, 1)
    np.add.at(inside, k_hi, -1)
    keep = np.cumsum(inside[:-1]) == 0
    times = path.times[keep]
    # new time: s - sum over excised intervals of (min(s, b) - a)^+
    shift = np.concatenate(([0.0], np.cumsum(b - a)))[np.searchsorted(b, times, side="left")]
    horizon = path.horizon - float(np.sum(b - a))
    return JumpLedger(times - shift, path.mags[keep], path.clocks[keep], horizon, path.drift_rate)


def _interleave_cummin(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    both = np.empty(2 * left.size)
    both[0::2] = left
    both[1::2] = right
    return np.minimum.accumulate(both)[1::2]


def skorokhod_residual(path: JumpLedger, t: float, t_prime: float, upto: float, n_grid: int = 1000) -> float:
    """Largest pointwise gap between the running infimum of ``X^(t)`` and the
    infimum of the finer running infimum plus the newly marked jump mass."""
    if upto > path.horizon:
        raise DomainError("upto must not exceed the horizon")
    grid = np.union1d(path.times[path.times <= upto], np.linspace(0.0, upto, n_grid))
    mk_t = path.marked(t)
    mk_tt = path.marked(t + t_prime)
    xt, xtt = path.select(~mk_t), path.select(~mk_tt)
    fresh = path.select(mk_tt & ~mk_t)
    inf_t = _interleave_cummin(evaluate(xt, grid, left=True), evaluate(xt, grid))
    inf_tt = _interleave_cummin(evaluate(xtt, grid, left=True), evaluate(xtt, grid))
    mass_left = evaluate(fresh, grid, left=True) - fresh.drift_rate * grid
    mass = evaluate(fresh, grid) - fresh.drift_rate * grid
    rhs = _interleave_cummin(inf_tt + mass_left, inf_tt + mass)
    return float(np.max(np.abs(inf_t - rhs)))
