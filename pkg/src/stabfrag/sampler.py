"""Random generation for the laws around the stable tree fragmentation.

All samplers take an :class:`~stabfrag.rng.RngStream` and are deterministic
given it. Parts of conditioned partitions are drawn one size-biased pick at a
time by an exact rejection sampler (see :mod:`stabfrag._kernels`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import _kernels
from .errors import ConfigurationError, DomainError, PathologicalInputError, ResourceError
from .partition import MassPartition
from .path import JumpLedger
from .rng import RngStream
from .specfun import StableParams, derive_constants, q1_table, weight_table

MAX_PICKS = 1_000_000
SMALL_TIME_DUST = 1e-6
MAX_JUMPS = 50_000_000
# picks a default-dust partition may need on average
_DUST_PICK_BUDGET = 1e5

__all__ = [
    "MassPartition",
    "default_dust",
    "sample_one_sided_stable",
    "sample_jump_field",
    "refine_jump_field",
    "sample_conditioned_jump",
    "sample_conditioned_partition",
    "sample_subordinator_bridge",
    "sample_semigroup_marginal",
    "DislocationSampler",
    "sample_dislocation",
    "sample_small_time_limit",
]


@lru_cache(maxsize=16)
def _q1_kernel(alpha: float) -> _kernels.Q1Kernel:
    p = derive_constants(alpha, allow_edge=True)
    return _kernels.build_q1_kernel(q1_table(p), p.c_small)


def default_dust(params: StableParams, total: float = 1.0) -> float:
    """Dust level reachable in about 1e5 picks, and never below ``1e-6*total``.

    The unpicked mass after ``k`` picks decays like ``k**(1 - alpha)``, so a
    fixed ``1e-6`` would need far more picks than any guard allows for most
    ``alpha``.
    """
    return total * max(1e-6, _DUST_PICK_BUDGET ** (1.0 - params.alpha))


def sample_one_sided_stable(
    params: StableParams, index: float, scale_laplace: float, rng: RngStream, size: int | None = None
):
    """Positive stable draw(s) with Laplace transform ``exp(-scale*lam**index)``."""
    if not 0 < index < 1 or scale_laplace <= 0:
        raise DomainError("need 0 < index < 1 and scale_laplace > 0")
    n = 1 if size is None else int(size)
    draws = _kernels.kanter_batch(rng.generator, float(index), n) * scale_laplace ** (1.0 / index)
    return float(draws[0]) if size is None else draws


def _field_rate(params: StableParams, eps: float) -> float:
    return params.c_big * eps ** (-params.alpha) / params.alpha


def compensator_drift(params: StableParams, eps: float) -> float:
    return -params.c_big * eps ** (1.0 - params.alpha) / (params.alpha - 1.0)


def _make_ledger(times, mags, clocks, horizon, drift) -> JumpLedger:
    order = np.argsort(times, kind="stable")
    times, mags, clocks = times[order], mags[order], clocks[order]
    # ties have probability zero; split any that float rounding creates
    while times.size > 1 and np.any(np.diff(times) <= 0):
        bad = np.flatnonzero(np.diff(times) <= 0) + 1
        times[bad] = np.nextafter(times[bad - 1], np.inf)
    return JumpLedger(times, mags, clocks, horizon, drift)


def sample_jump_field(
    params: StableParams, horizon: float, eps: float, rng: RngStream, max_jumps: int = MAX_JUMPS
) -> JumpLedger:
    """Compensated jumps of ``X`` above ``eps`` on ``[0, horizon]`` with mark clocks."""
    if horizon <= 0 or eps <= 0:
        raise DomainError("horizon and eps must be positive")
    mean = horizon * _field_rate(params, eps)
    if mean > max_jumps:
        raise ResourceError(f"expected {mean:.3g} jumps exceeds the budget of {max_jumps}")
    g = rng.generator
    n = int(g.poisson(mean))
    times = g.uniform(0.0, horizon, n)
    mags = eps * g.random(n) ** (-1.0 / params.alpha)
    clocks = g.standard_exponential(n)
    return _make_ledger(times, mags, clocks, horizon, compensator_drift(params, eps))


def refine_jump_field(
    params: StableParams, path: JumpLedger, eps: float, new_eps: float, rng: RngStream
) -> JumpLedger:
    """Add the jumps in ``(new_eps, eps]`` to a field cut at ``eps``; old jumps stay."""
    if not 0 < new_eps < eps:
        raise DomainError("need 0 < new_eps < eps")
    g = rng.generator
    a = params.alpha
    n = int(g.poisson(path.horizon * (_field_rate(params, new_eps) - _field_rate(params, eps))))
    times = g.uniform(0.0, path.horizon, n)
    # Pareto(alpha) restricted to (new_eps, eps] by inversion
    lo, hi = new_eps ** (-a), eps ** (-a)
    mags = (hi + g.random(n) * (lo - hi)) ** (-1.0 / a)
    clocks = g.standard_exponential(n)
    return _make_ledger(
        np.concatenate((path.times, times)),
        np.concatenate((path.mags, mags)),
        np.concatenate((path.clocks, clocks)),
        path.horizon,
        compensator_drift(params, new_eps),
    )


def sample_conditioned_jump(params: StableParams, x: float, total: float, rng: RngStream) -> float:
    """Size-biased first jump of ``T`` on ``[0, x]`` given ``T_x = total``."""
    if x <= 0 or total <= 0:
        raise DomainError("x and total must be positive")
    a = total * x ** (-params.alpha)
    u = _kernels.pick_fraction(rng.generator, a, *_q1_kernel(params.alpha).args)
    return u * total


def _chain(params, x, total, dust, resolve, max_picks, gen):
    picks, rem, ok = _kernels.partition_chain(
        gen, x ** (-params.alpha), float(total), float(dust), int(resolve), int(max_picks),
        *_q1_kernel(params.alpha).args,
    )
    if not ok:
        raise PathologicalInputError(
            f"partition did not reach dust {dust:.3g} within {max_picks} picks (left {rem:.3g})"
        )
    return picks, rem


def sample_conditioned_partition(
    params: StableParams,
    x: float,
    total: float,
    dust: float | None,
    rng: RngStream,
    resolve: int = 0,
    max_picks: int = MAX_PICKS,
) -> MassPartition:
    """Ranked jumps of ``T`` on ``[0, x]`` given ``T_x = total``.

    Picks stop once less than ``dust`` is left. With ``resolve = k`` they also
    stop as soon as the top ``k`` parts are certain, which is much cheaper
    when only the largest parts matter.
    """
    if dust is None:
        dust = default_dust(params, total)
    if x <= 0 or not 0 < dust < total:
        raise DomainError("need x > 0 and 0 < dust < total")
    picks, rem = _chain(params, x, total, dust, resolve, max_picks, rng.generator)
    part = MassPartition.from_unsorted(picks, rem, total, resolve if rem >= dust else None)
    if part.resolved is None and part.remainder > dust:
        raise AssertionError("remainder above the dust threshold")
    return part


def size_biased_sequence(
    params: StableParams, x: float, total: float, dust: float, rng: RngStream, max_picks: int = MAX_PICKS
) -> tuple[np.ndarray, float]:
    """Picks in draw order and the unpicked remainder."""
    return _chain(params, x, total, dust, 0, max_picks, rng.generator)


def sample_subordinator_bridge(
    params: StableParams, x: float, total: float, dust: float | None, rng: RngStream
) -> JumpLedger:
    """Bridge of ``T`` from 0 to ``total`` on unit time: conditioned jumps at uniform times."""
    if dust is None:
        dust = default_dust(params, total)
    if x <= 0 or not 0 < dust < total:
        raise DomainError("need x > 0 and 0 < dust < total")
    g = rng.generator
    picks, _ = _chain(params, x, total, dust, 0, MAX_PICKS, g)
    times = g.random(picks.size)
    clocks = g.standard_exponential(picks.size)
    return _make_ledger(times, picks, clocks, 1.0, 0.0)


def sample_semigroup_marginal(
    params: StableParams, t: float, dust: float | None, rng: RngStream, resolve: int = 0
) -> MassPartition:
    """The fragmentation state at time ``t`` started from a unit mass."""
    if t <= 0:
        raise DomainError("t must be positive")
    g = rng.generator
    z = float(weight_table(params, t).ppf(g.random()))
    if dust is None:
        dust = default_dust(params)
    picks, rem = _chain(params, z, 1.0, dust, resolve, MAX_PICKS, g)
    return MassPartition.from_unsorted(picks, rem, 1.0, resolve if rem >= dust else None)


# ---------------------------------------------------------------------------
# dislocation measure


def _int_aq1(params: StableParams, lo: float, hi: float, power: float = 1.0) -> float:
    # int_lo^hi a**power q1(a) da; substitution a = e^w keeps the tail smooth
    tab = q1_table(params)
    f = lambda w: math.exp((power + 1.0) * w) * float(tab.pdf(math.exp(w)))  # noqa: E731
    lo_w = math.log(max(lo, 1e-3))
    val, _ = integrate.quad(f, lo_w, math.log(hi), limit=400, epsrel=1e-10)
    return val


def _tail_int(params: StableParams, a_hi: float, power: float) -> float:
    """``int_{a_hi}^inf a**power q1(a) da`` for ``power < beta``."""
    b = params.beta
    top = 1e10 * a_hi
    head = _int_aq1(params, a_hi, top, power)
    # q1(a) ~ c_small * a**(-1-b) far out
    return head + params.c_small * top ** (power - b) / (b - power)


@dataclass
class DislocationSampler:
    """Exact draws from the dislocation measure restricted to ``{1 - s_1 > eps_cut}``.

    In the variable ``a = T_1`` the measure is ``D * a * q1(a) da`` mixed with
    the conditioned partition of total ``a`` at unit local time. Mass with
    ``a > a_hi`` is dropped; ``tail_bound`` is a Markov bound on what it
    contributes, and ``a_hi`` is raised until that is below 1% of ``rate``.
    """

    params: StableParams
    eps_cut: float
    a_hi: float
    head_mass: float
    rate: float
    rate_se: float
    tail_bound: float
    proposals: int
    accepted: int

    @classmethod
    def calibrate(
        cls,
        params: StableParams,
        eps_cut: float,
        rng: RngStream,
        n_accept: int = 4000,
        tail_draws: int = 2000,
        a_hi: float = 80.0,
    ) -> "DislocationSampler":
        if not 0 < eps_cut < 1:
            raise DomainError("eps_cut must lie in (0, 1)")
        b = params.beta
        pilot = None
        for attempt in range(16):
            head = params.d_const * _int_aq1(params, 0.0, a_hi)
            sub = rng.child(attempt)
            if pilot is None:
                # the rate grows with a_hi, so an early pilot keeps the bound conservative
                props, acc = _count_hits(params, eps_cut, a_hi, max(n_accept // 8, 200), sub.child(0))
                pilot = head * acc / props
            # E[1 - s_1 | a] at the cut, taken to decay like a**-beta beyond it
            m = _mean_defect(params, a_hi, tail_draws, sub.child(1))
            bound = params.d_const * m * a_hi**b * _tail_int(params, a_hi, 1.0 - b) / eps_cut
            if bound < 0.01 * pilot:
                break
            a_hi *= 4.0
        else:
            raise ConfigurationError(f"could not bound the truncated dislocation mass for eps_cut={eps_cut}")
        props, acc = _count_hits(params, eps_cut, a_hi, n_accept, rng.child(99))
        p_hat = acc / props
        rate = head * p_hat
        if bound >= 0.01 * rate:
            raise ConfigurationError(f"truncation bound {bound:.3g} is not below 1% of the rate {rate:.3g}")
        rate_se = head * math.sqrt(p_hat * (1.0 - p_hat) / props)
        return cls(params, eps_cut, float(a_hi), float(head), float(rate), float(rate_se), float(bound), int(props), int(acc))

    def draw(self, rng: RngStream, dust: float | None = None, piece: float | None = None) -> MassPartition:
        """One normalized partition with ``1 - s_1 > eps_cut``.

        Picks stop once less than ``dust`` is left or, when ``piece`` is
        given, once the leftover is what remains on average after every part
        above ``piece`` has been removed. The latter bounds the size of the
        unresolved parts rather than their total.
        """
        g = rng.generator
        a, picks, rem, _ = _hit(self.params, self.eps_cut, self.a_hi, g, 10**9)
        if piece is not None:
            stop = min(residual_mass(self.params, 1.0, piece * a), 0.5 * a)
        else:
            stop = (default_dust(self.params) if dust is None else dust) * a
        if rem >= stop:
            # only the largest part was certified; finish the partition
            more, rem = _chain(self.params, 1.0, rem, stop, 0, MAX_PICKS, g)
            picks = np.concatenate((picks, more))
        return MassPartition.from_unsorted(picks / a, rem / a, 1.0)


def residual_mass(params: StableParams, x: float, piece: float) -> float:
    """Mean total of the jumps of ``T`` on ``[0, x]`` that are smaller than ``piece``."""
    b = params.beta
    return params.c_small * x * piece ** (1.0 - b) / (1.0 - b)


A0 = 20.0


@lru_cache(maxsize=16)
def _envelope(alpha: float) -> float:
    # log of sup over a >= A0 of q1(a)*a**(1+beta); tends to log c_small
    p = derive_constants(alpha, allow_edge=True)
    a = np.geomspace(A0, 1e12, 4000)
    lq = q1_table(p).logpdf(a) + (1.0 + p.beta) * np.log(a)
    return float(max(lq.max(), math.log(p.c_small))) + 1e-3


def _hit(params, eps_cut, a_hi, g, max_props):
    b = params.beta
    log_env = _envelope(params.alpha)
    z_hi = (a_hi ** (1.0 - b) - A0 ** (1.0 - b)) / (1.0 - b)
    p_low = A0 / (A0 + math.exp(log_env) * z_hi)
    return _kernels.dislocation_hit(
        g, eps_cut, A0, a_hi, p_low, log_env, max_props, *_q1_kernel(params.alpha).args
    )


def _count_hits(params, eps_cut, a_hi, n_accept, rng):
    g = rng.generator
    props = 0
    for _ in range(n_accept):
        _, _, _, k = _hit(params, eps_cut, a_hi, g, 10**5)
        if k < 0:
            raise ConfigurationError(f"acceptance below 1e-5; use a larger eps_cut than {eps_cut}")
        props += k
    if n_accept / props < 1e-4:
        raise ConfigurationError(
            f"acceptance {n_accept / props:.2e} below 1e-4; use a larger eps_cut than {eps_cut}"
        )
    return props, n_accept


def _mean_defect(params, a, n, rng):
    g = rng.generator
    vals = np.empty(n)
    for i in range(n):
        picks, _ = _chain(params, 1.0, a, 1e-300, 1, MAX_PICKS, g)
        vals[i] = 1.0 - picks.max() / a
    return float(vals.mean() + 2.0 * vals.std(ddof=1) / math.sqrt(n))


@lru_cache(maxsize=32)
def _calibrated(alpha: float, eps_cut: float, seed: int, stream_id: int, path: tuple) -> DislocationSampler:
    return DislocationSampler.calibrate(derive_constants(alpha, allow_edge=True), eps_cut, RngStream(seed, stream_id, path))


def sample_dislocation(
    params: StableParams, eps_cut: float, dust: float | None, rng: RngStream
) -> tuple[MassPartition, float]:
    """One draw from the restricted dislocation measure and the rate estimate ``lambda_eps``.

    The calibration run uses a fixed child of ``rng`` and is cached, so repeated
    calls with sibling streams share it.
    """
    calib = rng.child(0xD15C)
    sampler = _calibrated(params.alpha, float(eps_cut), calib.seed, calib.stream_id, calib.path)
    return sampler.draw(rng, dust), sampler.rate


# ---------------------------------------------------------------------------
# small-time limit


def sample_small_time_limit(params: StableParams, dust: float | None, rng: RngStream) -> MassPartition:
    """Ranked jumps of ``T`` over an independent local time ``Z``.

    ``Z`` has Laplace transform ``exp(-alpha*lam**(alpha-1))``. Given ``Z``
    the jumps form a Poisson field of intensity ``Z*c*y**(-1-beta)``, whose
    natural scale is ``s = (Z*c/beta)**alpha``. Jumps below ``dust * s`` are
    not drawn; their mean total becomes the remainder.
    """
    a, b, c = params.alpha, params.beta, params.c_small
    rel = SMALL_TIME_DUST if dust is None else float(dust)
    if rel <= 0:
        raise DomainError("dust must be positive")
    g = rng.generator
    z = float(_kernels.kanter_draw(g, a - 1.0)) * a ** (1.0 / (a - 1.0))
    # jumps above delta in decreasing order: y_k = (b*G_k/(z*c))**(-1/b)
    lam = z * c / b
    delta = rel * lam**a
    n_expect = lam * delta ** (-b)
    if n_expect > MAX_JUMPS:
        raise ResourceError(f"expected {n_expect:.3g} jumps exceeds the budget")
    n = int(g.poisson(n_expect))
    arrivals = np.sort(g.random(n)) * n_expect
    parts = (arrivals / lam) ** (-1.0 / b)
    rem = z * c * delta ** (1.0 - b) / (1.0 - b)
    return MassPartition(parts, rem, float(parts.sum()) + rem)
