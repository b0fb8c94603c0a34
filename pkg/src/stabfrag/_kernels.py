"""Compiled inner loops: the ``T_1`` log-density and the size-biased pick chain.

The log-density of ``T_1`` is carried as two cubic pieces: on the left in
``lw = log(s**-g)`` with the ``-k0*w`` term split off analytically, and on the
right in ``log s`` with the power tail split off. Both extrapolate linearly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.interpolate import CubicSpline

from .specfun import Q1Table

# layout of the scalar parameter vector handed to the kernels
_BETA, _G, _K0, _SCROSS, _MODE, _LOGMODE, _ABIG, _LOGC = range(8)


@dataclass(frozen=True)
class Q1Kernel:
    """Array form of a :class:`Q1Table` for the compiled samplers."""

    par: np.ndarray
    lx: np.ndarray
    lc: np.ndarray
    lcx: np.ndarray
    lcc: np.ndarray
    rx: np.ndarray
    rc: np.ndarray
    rsx: np.ndarray
    rsc: np.ndarray

    @property
    def args(self) -> tuple:
        return (self.par, self.lx, self.lc, self.lcx, self.lcc, self.rx, self.rc, self.rsx, self.rsc)


def build_q1_kernel(tab: Q1Table, c_small: float) -> Q1Kernel:
    b = tab.beta
    ls = np.linspace(math.log(tab.s_cross), math.log(1e12), 1500)
    s = np.exp(ls)
    right = CubicSpline(ls, np.log(tab.series.pdf(s)) + (1.0 + b) * ls)
    right_sf = CubicSpline(ls, np.log(tab.series.sf(s)) + b * ls)
    grid = np.geomspace(1e-2, 1e2, 40001)
    lf = tab.logpdf(grid)
    mode = float(grid[np.argmax(lf)])
    cdf = tab.cdf(grid)
    median = float(grid[np.searchsorted(cdf, 0.5)])
    if median <= mode:
        raise AssertionError("expected the median of T_1 above its mode")
    par = np.array(
        [b, tab.g, tab.k0, tab.s_cross, mode, float(lf.max()), 2.0 * median, math.log(c_small)]
    )
    pdf_sp, cdf_sp = tab._pdf_spline, tab._cdf_spline
    return Q1Kernel(
        par=par,
        lx=np.ascontiguousarray(pdf_sp.x), lc=np.ascontiguousarray(pdf_sp.c),
        lcx=np.ascontiguousarray(cdf_sp.x), lcc=np.ascontiguousarray(cdf_sp.c),
        rx=np.ascontiguousarray(right.x), rc=np.ascontiguousarray(right.c),
        rsx=np.ascontiguousarray(right_sf.x), rsc=np.ascontiguousarray(right_sf.c),
    )


@numba.njit(cache=True)
def _spl(x, c, t):
    # piecewise cubic with linear extrapolation; returns (value, derivative)
    n = x.shape[0]
    if t <= x[0]:
        d = c[2, 0]
        return c[3, 0] + d * (t - x[0]), d
    if t >= x[n - 1]:
        h = x[n - 1] - x[n - 2]
        j = n - 2
        v = ((c[0, j] * h + c[1, j]) * h + c[2, j]) * h + c[3, j]
        d = (3.0 * c[0, j] * h + 2.0 * c[1, j]) * h + c[2, j]
        return v + d * (t - x[n - 1]), d
    i = np.searchsorted(x, t) - 1
    if i < 0:
        i = 0
    h = t - x[i]
    v = ((c[0, i] * h + c[1, i]) * h + c[2, i]) * h + c[3, i]
    d = (3.0 * c[0, i] * h + 2.0 * c[1, i]) * h + c[2, i]
    return v, d


@numba.njit(cache=True)
def logq1(s, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc):
    if s >= par[_SCROSS]:
        ls = math.log(s)
        v, _ = _spl(rx, rc, ls)
        return v - (1.0 + par[_BETA]) * ls
    lw = -par[_G] * math.log(s)
    v, _ = _spl(lx, lc, lw)
    return v - par[_K0] * math.exp(lw)


@numba.njit(cache=True)
def logcdf1(s, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc):
    if s >= par[_SCROSS]:
        ls = math.log(s)
        v, _ = _spl(rsx, rsc, ls)
        return math.log1p(-math.exp(v - par[_BETA] * ls))
    lw = -par[_G] * math.log(s)
    v, _ = _spl(lcx, lcc, lw)
    return v - par[_K0] * math.exp(lw)


@numba.njit(cache=True)
def kanter_draw(gen, b):
    """One draw with Laplace transform ``exp(-lam**b)``."""
    u = math.pi * gen.random()
    while u == 0.0:
        u = math.pi * gen.random()
    e = gen.standard_exponential()
    lk = (math.log(math.sin(b * u)) - math.log(math.sin(u))) / (1.0 - b) + math.log(
        math.sin((1.0 - b) * u)
    ) - math.log(math.sin(b * u))
    return math.exp((lk - math.log(e)) * (1.0 - b) / b)


@numba.njit(cache=True)
def _tilted_power(gen, b, kappa):
    # density proportional to u**(-b) * exp(-kappa*u) on (0, 1), kappa >= 0
    while True:
        if kappa <= 1.0:
            u = gen.random() ** (1.0 / (1.0 - b))
            if gen.random() < math.exp(-kappa * u):
                return u
        else:
            u = gen.standard_gamma(1.0 - b) / kappa
            if 0.0 < u < 1.0:
                return u


@numba.njit(cache=True)
def pick_fraction(gen, a, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc):
    """Fraction ``u = y/total`` of one size-biased conditioned pick.

    The target density in ``u`` is proportional to ``u**-b * q1(a*(1-u))``.
    """
    b = par[_BETA]
    g = par[_G]
    k0 = par[_K0]
    if a <= par[_MODE]:
        # log q1 is concave left of its mode: tangent-line envelope at a
        if a < par[_SCROSS]:
            lw_a = -g * math.log(a)
            h_a, dh_a = _spl(lx, lc, lw_a)
            kw = k0 * math.exp(lw_a)
            kappa = -g * dh_a + kw * g
            while True:
                u = _tilted_power(gen, b, kappa)
                ell = -math.log1p(-u)
                h_r, _ = _spl(lx, lc, lw_a + g * ell)
                logacc = h_r - h_a - g * dh_a * u - kw * (math.expm1(g * ell) - g * u)
                if math.log(gen.random()) < logacc:
                    return u
        else:
            la = logq1(a, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc)
            ls = math.log(a)
            v, dv = _spl(rx, rc, ls)
            kappa = dv - (1.0 + b)
            while True:
                u = _tilted_power(gen, b, kappa)
                lr = logq1(a * (1.0 - u), par, lx, lc, lcx, lcc, rx, rc, rsx, rsc)
                if math.log(gen.random()) < lr - la + kappa * u:
                    return u
    if a < par[_ABIG]:
        # flat envelope at the mode
        lm = par[_LOGMODE]
        while True:
            u = gen.random() ** (1.0 / (1.0 - b))
            lr = logq1(a * (1.0 - u), par, lx, lc, lcx, lcc, rx, rc, rsx, rsc)
            if math.log(gen.random()) < lr - lm:
                return u
    # two pieces: power law on (0, 1/2], q1-shaped on (1/2, 1)
    lhalf = logq1(0.5 * a, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc)
    w1 = math.exp(lhalf + (1.0 - b) * math.log(0.5)) / (1.0 - b)
    w2 = math.exp(b * math.log(2.0) + logcdf1(0.5 * a, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc)) / a
    p1 = w1 / (w1 + w2)
    while True:
        if gen.random() < p1:
            u = 0.5 * gen.random() ** (1.0 / (1.0 - b))
            lr = logq1(a * (1.0 - u), par, lx, lc, lcx, lcc, rx, rc, rsx, rsc)
            if math.log(gen.random()) < lr - lhalf:
                return u
        else:
            r = kanter_draw(gen, b)
            while r >= 0.5 * a:
                r = kanter_draw(gen, b)
            u = 1.0 - r / a
            if gen.random() < (0.5 / u) ** b:
                return u


@numba.njit(cache=True)
def partition_chain(gen, xa, total, dust, resolve, max_picks, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc):
    """Size-biased picks from the jumps of ``T_x`` given ``T_x = total``.

    ``xa`` is ``x**-alpha``. Stops when the unpicked mass drops below ``dust``
    or, with ``resolve = k > 0``, below the k-th largest pick so far (every
    later pick is smaller, so the top k are final). Returns
    ``(picks, remainder, ok)``; ``ok`` is False when ``max_picks`` ran out.
    """
    cap = 64
    out = np.empty(cap)
    tops = np.zeros(max(resolve, 1))
    n = 0
    r = total
    while r >= dust:
        if resolve > 0 and n >= resolve and r < tops[resolve - 1]:
            break
        if n >= max_picks:
            return out[:n], r, False
        u = pick_fraction(gen, r * xa, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc)
        y = u * r
        r -= y
        if n == cap:
            cap *= 2
            grown = np.empty(cap)
            grown[:n] = out[:n]
            out = grown
        out[n] = y
        n += 1
        if resolve > 0 and y > tops[resolve - 1]:
            k = resolve - 1
            while k > 0 and tops[k - 1] < y:
                tops[k] = tops[k - 1]
                k -= 1
            tops[k] = y
    return out[:n], r, True


@numba.njit(cache=True)
def kanter_batch(gen, b, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = kanter_draw(gen, b)
    return out


@numba.njit(cache=True)
def propose_size_biased(gen, a0, a_hi, p_low, log_env, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc):
    """Draw ``a`` with density proportional to ``a*q1(a)`` on ``(0, a_hi)``.

    Below ``a0``: ``T_1`` draws thinned by ``a/a0``. Above: ``a**-beta``
    proposals thinned by ``q1(a)*a**(1+beta)/exp(log_env)``; ``p_low`` is the
    exact mass share of the lower piece.
    """
    b = par[_BETA]
    while True:
        if gen.random() < p_low:
            a = kanter_draw(gen, b)
            if a < a0 and gen.random() * a0 < a:
                return a
        else:
            lo = a0 ** (1.0 - b)
            hi = a_hi ** (1.0 - b)
            a = (lo + gen.random() * (hi - lo)) ** (1.0 / (1.0 - b))
            lq = logq1(a, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc) + (1.0 + b) * math.log(a)
            if math.log(gen.random()) < lq - log_env:
                return a


@numba.njit(cache=True)
def dislocation_hit(gen, eps_cut, a0, a_hi, p_low, log_env, max_props, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc):
    """First proposal whose largest part leaves more than ``eps_cut`` of the mass.

    Returns ``(a, picks, remainder, proposals)`` with the picks resolved up to
    the largest part; ``proposals`` is negative when ``max_props`` ran out.
    """
    props = 0
    while props < max_props:
        a = propose_size_biased(gen, a0, a_hi, p_low, log_env, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc)
        xa = 1.0
        picks, rem, ok = partition_chain(gen, xa, a, 1e-300, 1, 10**6, par, lx, lc, lcx, lcc, rx, rc, rsx, rsc)
        props += 1
        if ok and 1.0 - picks.max() / a > eps_cut:
            return a, picks, rem, props
    return 0.0, np.empty(0), 0.0, -props


@numba.njit(cache=True)
def _grow(a, n):
    out = np.empty(max(2 * a.shape[0], 16))
    out[:n] = a[:n]
    return out


@numba.njit(cache=True)
def passage_path(gen, alpha, eps, rate, drift, level, max_jumps):
    """Jumps of the truncated ``X`` up to its first passage below ``level``.

    Returns ``(times, mags, clocks, passage_time, ok)``; ``ok`` is False if
    ``max_jumps`` ran out first.
    """
    times = np.empty(256)
    mags = np.empty(256)
    clocks = np.empty(256)
    n = 0
    s = 0.0
    x = 0.0
    inv = -1.0 / alpha
    while True:
        gap = gen.standard_exponential() / rate
        if x + drift * gap < level:
            return times[:n], mags[:n], clocks[:n], s + (level - x) / drift, True
        if n >= max_jumps:
            return times[:n], mags[:n], clocks[:n], s, False
        s += gap
        x += drift * gap
        if n == times.shape[0]:
            times = _grow(times, n)
            mags = _grow(mags, n)
            clocks = _grow(clocks, n)
        y = eps * gen.random() ** inv
        times[n] = s
        mags[n] = y
        clocks[n] = gen.standard_exponential()
        x += y
        n += 1


@numba.njit(cache=True)
def harvest_excursion(gen, alpha, eps, rate, drift, v_lo, v_hi, max_jumps):
    """One excursion above the infimum with duration in ``[v_lo, v_hi]``.

    Excursions start with a jump from the infimum and end at the first return
    to the starting level; attempts are aborted once they outlast ``v_hi``.
    Returns ``(times, mags, clocks, duration, jumps_used)``; ``duration`` is
    negative when ``max_jumps`` simulated jumps did not produce one.
    """
    times = np.empty(256)
    mags = np.empty(256)
    clocks = np.empty(256)
    inv = -1.0 / alpha
    used = 0
    while used < max_jumps:
        n = 1
        times[0] = 0.0
        mags[0] = eps * gen.random() ** inv
        clocks[0] = gen.standard_exponential()
        x = mags[0]
        s = 0.0
        used += 1
        while True:
            gap = gen.standard_exponential() / rate
            if x + drift * gap <= 0.0:
                dur = s - x / drift
                if v_lo <= dur <= v_hi:
                    return times[:n], mags[:n], clocks[:n], dur, used
                break
            s += gap
            if s > v_hi:
                break
            x += drift * gap
            if n == times.shape[0]:
                times = _grow(times, n)
                mags = _grow(mags, n)
                clocks = _grow(clocks, n)
            times[n] = s
            mags[n] = eps * gen.random() ** inv
            clocks[n] = gen.standard_exponential()
            x += mags[n]
            n += 1
            used += 1
    return times[:0], mags[:0], clocks[:0], -1.0, used
