"""The fragmentation processes: path-level constructions and the kernel-level
event simulation, plus the small-time splitting-rate estimator."""

from __future__ import annotations

import heapq
import io
import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, ResourceError
from .partition import MassPartition
from .path import JumpLedger, constancy_arrays, remove_marked
from .rng import RngStream
from .sampler import DislocationSampler, compensator_drift, sample_semigroup_marginal
from .specfun import StableParams

DEFAULT_DELTA_DUR = 0.02
HARVEST_BUDGET = 2_000_000_000
KERNEL_RESOLUTION = 1e-6


@dataclass
class FragmentationTrace:
    """States of one fragmentation run on a time grid."""

    t_grid: np.ndarray
    states: list[MassPartition]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        if len(self.states) != self.t_grid.size:
            raise ValueError("one state per grid time is required")

    def state_at(self, t: float) -> MassPartition:
        k = np.flatnonzero(np.isclose(self.t_grid, t, rtol=1e-12, atol=0.0))
        if k.size == 0:
            raise DomainError(f"t={t} is not on the trace grid")
        return self.states[int(k[0])]

    def to_jsonl(self, replicate: int | None = None) -> str:
        sid = self.meta.get("stream_id") if replicate is None else replicate
        lines = [s.to_jsonl(float(t), sid) for t, s in zip(self.t_grid, self.states)]
        return "\n".join(lines) + "\n"


def _check_grid(t_grid: Sequence[float]) -> np.ndarray:
    g = np.asarray(t_grid, dtype=float)
    if g.ndim != 1 or g.size == 0 or np.any(g < 0) or np.any(np.diff(g) <= 0):
        raise DomainError("t_grid must be a nonempty increasing sequence of nonnegative times")
    return g


def _rate(params: StableParams, eps: float) -> float:
    return params.c_big * eps ** (-params.alpha) / params.alpha


def passage_ledger(
    params: StableParams, eps: float, rng: RngStream, level: float = -1.0, max_jumps: int = 10**8
) -> JumpLedger:
    """Truncated ``X`` simulated until it first goes below ``level``; horizon is that time."""
    times, mags, clocks, t_pass, ok = _kernels.passage_path(
        rng.generator, params.alpha, eps, _rate(params, eps), compensator_drift(params, eps), level, max_jumps
    )
    if not ok:
        raise ResourceError(f"no passage below {level} within {max_jumps} jumps")
    return JumpLedger(times, mags, clocks, t_pass, compensator_drift(params, eps))


def normalized_excursion(
    params: StableParams,
    eps: float,
    rng: RngStream,
    delta_dur: float = DEFAULT_DELTA_DUR,
    budget: int = HARVEST_BUDGET,
) -> tuple[JumpLedger, float]:
    """An excursion above the infimum rescaled to unit duration.

    Excursions of a truncated path with duration in ``[1, 1 + delta_dur]`` are
    harvested and mapped to duration 1 by the stable scaling, which sends the
    truncation level ``eps`` to ``eps*v**(-1/alpha) <= eps``. Returns the
    rescaled ledger and the raw duration ``v``.
    """
    if delta_dur <= 0:
        raise DomainError("delta_dur must be positive")
    a = params.alpha
    d = compensator_drift(params, eps)
    times, mags, clocks, v, _ = _kernels.harvest_excursion(
        rng.generator, a, eps, _rate(params, eps), d, 1.0, 1.0 + delta_dur, budget
    )
    if v < 0:
        raise ResourceError(f"excursion harvest used its budget of {budget} jumps")
    times = times / v
    # the final jump can sit within rounding of the rescaled end
    times = np.minimum(times, np.nextafter(1.0, 0.0))
    scale = v ** (-1.0 / a)
    return JumpLedger(times, mags * scale, clocks, 1.0, d * v * scale), float(v)


def constancy_partition(path: JumpLedger, t: float, upto: float) -> MassPartition:
    """Ranked constancy-interval lengths of the running infimum of ``X^(t)``."""
    lo, hi, _, _ = constancy_arrays(remove_marked(path, t), upto)
    lengths = hi - lo
    return MassPartition.from_unsorted(lengths, max(upto - float(lengths.sum()), 0.0), upto)


def frag_path_level(
    params: StableParams,
    t_grid: Sequence[float],
    eps: float,
    mode: str,
    rng: RngStream,
    delta_dur: float = DEFAULT_DELTA_DUR,
) -> FragmentationTrace:
    """One path-level trace.

    ``first_passage``: the path runs until it first goes below -1 and masses
    are constancy lengths up to that time (total ``T_1``). ``normalized``: a
    unit-duration excursion (see :func:`normalized_excursion`).
    The strict-decrease time of the infimum is the remainder.
    """
    grid = _check_grid(t_grid)
    if mode == "first_passage":
        path = passage_ledger(params, eps, rng)
        extra = {}
    elif mode == "normalized":
        path, v = normalized_excursion(params, eps, rng, delta_dur)
        extra = {"raw_duration": v, "delta_dur": delta_dur}
    else:
        raise DomainError(f"unknown mode {mode!r}")
    upto = path.horizon
    states = [constancy_partition(path, float(t), upto) for t in grid]
    meta = {"alpha": params.alpha, "eps": eps, "mode": mode, "seed": rng.seed, "stream_id": rng.stream_id, **extra}
    return FragmentationTrace(grid, states, meta)


# ---------------------------------------------------------------------------
# kernel level


def frag_kernel_level(
    params: StableParams,
    eps_cut: float,
    floor: float,
    t_end: float,
    rng: RngStream,
    t_grid: Sequence[float] | None = None,
    x0: float = 1.0,
    sampler: DislocationSampler | None = None,
    resolution: float = KERNEL_RESOLUTION,
    max_events: int = 10**6,
) -> FragmentationTrace:
    """Event-driven self-similar fragmentation with dislocations ``1 - s_1 > eps_cut``.

    A fragment of mass ``x`` splits at rate ``x**(1/alpha) * lambda_eps`` into
    ``x`` times a dislocation draw. Fragments below ``floor`` are frozen: they
    never split and are kept only as a total, so each state's remainder is the
    unresolved dust plus the frozen mass (the latter also listed per grid time
    in ``meta["frozen_mass"]``). Each dislocation draw is resolved down to
    parts of relative size ``resolution`` (or absolute size ``floor``, if
    coarser); see :meth:`DislocationSampler.draw`. The unresolved mass goes
    to the remainder.
    """
    if not 0 < eps_cut < 1 or floor <= 0 or t_end <= 0 or x0 <= 0 or not 0 < resolution < 1:
        raise DomainError("need 0 < eps_cut < 1, 0 < resolution < 1 and positive floor, t_end, x0")
    grid = _check_grid([0.0, t_end] if t_grid is None else t_grid)
    if grid[-1] > t_end:
        raise DomainError("t_grid must end by t_end")
    if sampler is None:
        sampler = DislocationSampler.calibrate(params, eps_cut, rng.child(0))
    g = rng.generator
    beta = params.beta
    lam = sampler.rate
    live: list[tuple[float, int, float]] = []
    births = 0
    remainder = 0.0
    frozen = 0.0

    def add(masses: np.ndarray, now: float):
        nonlocal births, frozen
        small = masses < floor
        frozen += float(masses[small].sum())
        big = masses[~small]
        fire = now + g.standard_exponential(big.size) / (lam * big**beta)
        for f, m in zip(fire.tolist(), big.tolist()):
            heapq.heappush(live, (f, births, m))
            births += 1

    add(np.array([x0]), 0.0)
    states = []
    frozen_mass = []
    events = 0
    draw_rng = rng.child(1)
    for t in grid:
        while live and live[0][0] <= t:
            now, _, x = heapq.heappop(live)
            events += 1
            if events > max_events:
                raise ResourceError(f"more than {max_events} dislocation events")
            # parts below the floor are frozen anyway, so resolve no further than that
            part = sampler.draw(draw_rng, piece=min(max(resolution, floor / x), 0.5))
            remainder += x * part.remainder
            add(x * part.parts, now)
        masses = np.array([m for _, _, m in live])
        states.append(MassPartition.from_unsorted(masses, remainder + frozen, x0))
        frozen_mass.append(frozen)
    meta = {
        "alpha": params.alpha, "eps_cut": eps_cut, "floor": floor, "x0": x0,
        "rate": lam, "events": events, "frozen_mass": frozen_mass, "resolution": resolution, "seed": rng.seed, "stream_id": rng.stream_id,
    }
    return FragmentationTrace(grid, states, meta)


# ---------------------------------------------------------------------------
# splitting rate


def splitting_rate_estimate(
    params: StableParams,
    test_fn: Callable[[MassPartition], float],
    t_small: float,
    n_rep: int,
    rng: RngStream,
    resolve: int = 0,
    dust: float | None = None,
) -> tuple[float, float]:
    """``t**-1 E[test_fn(F(t))]`` from semigroup draws, with its standard error.

    ``resolve`` is passed to the semigroup sampler: when ``test_fn`` only reads
    the ``k`` largest parts, ``resolve=k`` makes each draw cheap and exact.
    """
    if t_small <= 0 or n_rep < 2:
        raise DomainError("need t_small > 0 and n_rep >= 2")
    vals = np.empty(n_rep)
    for i in range(n_rep):
        f = sample_semigroup_marginal(params, t_small, 1e-12 if resolve else dust, rng.child(i), resolve)
        vals[i] = test_fn(f)
    est = vals.mean() / t_small
    se = vals.std(ddof=1) / math.sqrt(n_rep) / t_small
    return float(est), float(se)


# ---------------------------------------------------------------------------
# summaries


def summarize(traces: Iterable[FragmentationTrace]) -> list[dict]:
    """Per-time averages of F1, F2 and the sum of squares over replicates."""
    traces = list(traces)
    if not traces:
        return []
    grid = traces[0].t_grid
    rows = []
    for k, t in enumerate(grid):
        f1 = np.array([tr.states[k].largest(1) for tr in traces])
        f2 = np.array([tr.states[k].largest(2) for tr in traces])
        sq = np.array([tr.states[k].sum_of_powers(2.0) for tr in traces])
        rows.append({"t": float(t), "mean_F1": f1.mean(), "mean_F2": f2.mean(), "mean_sumsq": sq.mean(), "n": len(traces)})
    return rows


def summary_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["t", "mean_F1", "mean_F2", "mean_sumsq", "n"]
    w.writerow(cols)
    for r in rows:
        w.writerow([r[c] if c == "n" else f"{r[c]:.17g}" for c in cols])
    return buf.getvalue()


def trace_records(traces: Iterable[FragmentationTrace]) -> Iterable[str]:
    for i, tr in enumerate(traces):
        for t, s in zip(tr.t_grid, tr.states):
            yield json.dumps({"replicate": i, **s.to_record(float(t), tr.meta.get("stream_id"))})
