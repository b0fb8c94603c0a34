"""Closed-form laws of the stable fragmentation: constants, densities, transforms.

Conventions used throughout:

* ``X`` is spectrally positive stable with ``E exp(-lam X_s) = exp(s lam**alpha)``.
* ``T_x`` is the first passage of ``X`` below ``-x``; it is a stable subordinator
  of index ``1/alpha`` with ``E exp(-lam T_x) = exp(-x lam**(1/alpha))``.
* ``Z^(t)`` sums the jumps of ``X`` that are marked at level ``t``.

``q1`` (the density of ``T_1``) is evaluated from Kanter's integral
representation on ``(0, pi)``; Pollard's series takes over for large arguments.
The density of ``Z^(t)_1`` is obtained by inverting its Laplace transform with
the trapezoid rule on a hyperbolic Bromwich contour.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import gamma, gammaln

from .errors import DomainError, NumericAccuracyError

ALPHA_RANGE = (1.05, 1.95)


@dataclass(frozen=True)
class StableParams:
    """Index ``alpha`` and the three constants derived from it."""

    alpha: float
    c_big: float
    c_small: float
    d_const: float

    @property
    def beta(self) -> float:
        """Index of the first-passage subordinator, ``1/alpha``."""
        return 1.0 / self.alpha


def derive_constants(alpha: float, allow_edge: bool = False) -> StableParams:
    """Return ``StableParams`` for ``alpha``.

    ``allow_edge`` lifts the default admissible range ``[1.05, 1.95]`` to the
    full open interval ``(1, 2)``.
    """
    alpha = float(alpha)
    if not 1.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (1, 2), got {alpha}")
    lo, hi = ALPHA_RANGE
    if not allow_edge and not lo <= alpha <= hi:
        raise DomainError(
            f"alpha={alpha} outside the admissible range [{lo}, {hi}]; "
            "pass allow_edge=True to override"
        )
    c_big = alpha * (alpha - 1.0) / gamma(2.0 - alpha)
    c_small = 1.0 / (alpha * gamma(1.0 - 1.0 / alpha))
    d_const = alpha**2 * gamma(2.0 - 1.0 / alpha) / gamma(2.0 - alpha)
    return StableParams(alpha, float(c_big), float(c_small), float(d_const))


class LaplaceKind(str, Enum):
    X = "X"
    T = "T"
    Z_t = "Z_t"
    X_t = "X_t"


def laplace_exponent(params: StableParams, kind: str, t: float, lam: float) -> float:
    """Laplace exponent ``e(lam)``; the transform's sign depends on ``kind``.

    ``X``: ``E exp(-lam X_s) = exp(+s e)``, ``e = lam**alpha``.
    ``T``: ``E exp(-lam T_x) = exp(-x e)``, ``e = lam**(1/alpha)``.
    ``Z_t``: ``E exp(-lam Z_s) = exp(-s e)``, ``e = (lam+t)**a - lam**a - t**a``.
    ``X_t``: ``E exp(-lam X^(t)_s) = exp(+s e)``, ``e = (lam+t)**a - t**a``.
    """
    kind = LaplaceKind(kind)
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    a = params.alpha
    if kind is LaplaceKind.X:
        return lam**a
    if kind is LaplaceKind.T:
        return lam ** (1.0 / a)
    if kind is LaplaceKind.Z_t:
        return (lam + t) ** a - lam**a - t**a
    return (lam + t) ** a - t**a


# ---------------------------------------------------------------------------
# DensityTable


@dataclass
class DensityTable:
    """Tabulated density on an increasing grid, with its CDF and tail mass.

    ``cdf`` is the cumulative trapezoid of ``pdf`` rescaled so that
    ``cdf[-1] + tail_mass == 1``; the rescaling factor is kept in
    ``build_params['norm_defect']``.
    """

    grid: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    tail_mass: float
    alpha: float | None = None
    t: float | None = None
    build_params: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_pdf(
        cls,
        grid: np.ndarray,
        pdf: np.ndarray,
        tail_mass: float,
        head_mass: float = 0.0,
        log_cells: bool = False,
        **meta: Any,
    ) -> "DensityTable":
        grid = np.asarray(grid, dtype=float)
        pdf = np.maximum(np.asarray(pdf, dtype=float), 0.0)
        if np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly increasing")
        if log_cells:
            # trapezoid in log x: exact for power laws, used on geometric grids
            xf = grid * pdf
            cells = 0.5 * (xf[1:] + xf[:-1]) * np.diff(np.log(grid))
        else:
            cells = 0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid)
        raw = head_mass + np.concatenate(([0.0], np.cumsum(cells)))
        total = raw[-1] + tail_mass
        cdf = raw * ((1.0 - tail_mass) / raw[-1])
        build_params = dict(meta.pop("build_params", {}))
        build_params["norm_defect"] = float(total - 1.0)
        return cls(grid, pdf, cdf, float(tail_mass), build_params=build_params, **meta)

    @property
    def norm_defect(self) -> float:
        return float(self.build_params.get("norm_defect", 0.0))

    def ppf(self, p: np.ndarray) -> np.ndarray:
        """Inverse CDF by monotone interpolation; ``p`` beyond the table clips."""
        p = np.asarray(p, dtype=float)
        cdf = self.cdf
        idx = np.searchsorted(cdf, p, side="right") - 1
        idx = np.clip(idx, 0, len(cdf) - 2)
        c0, c1 = cdf[idx], cdf[idx + 1]
        g0, g1 = self.grid[idx], self.grid[idx + 1]
        f0, f1 = self.pdf[idx], self.pdf[idx + 1]
        # invert the trapezoid exactly inside the cell (pdf linear in x)
        dx = g1 - g0
        target = np.clip(p - c0, 0.0, None)
        scale = np.where(c1 > c0, (c1 - c0) / np.maximum(0.5 * (f0 + f1) * dx, 1e-300), 1.0)
        target = target / scale
        slope = (f1 - f0) / dx
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = np.maximum(f0 * f0 + 2.0 * slope * target, 0.0)
            step = np.where(
                np.abs(slope) * dx > 1e-12 * np.maximum(f0, 1e-300),
                (np.sqrt(disc) - f0) / slope,
                target / np.maximum(f0, 1e-300),
            )
        step = np.clip(np.nan_to_num(step, nan=0.0), 0.0, dx)
        return g0 + step

    def cdf_at(self, x: np.ndarray) -> np.ndarray:
        """CDF at arbitrary points, exact for the piecewise-linear pdf."""
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.grid, x, side="right") - 1, 0, len(self.grid) - 2)
        g0, g1 = self.grid[idx], self.grid[idx + 1]
        f0, f1 = self.pdf[idx], self.pdf[idx + 1]
        c0, c1 = self.cdf[idx], self.cdf[idx + 1]
        d = np.clip(x - g0, 0.0, g1 - g0)
        slope = (f1 - f0) / (g1 - g0)
        raw = f0 * d + 0.5 * slope * d * d
        cell = 0.5 * (f0 + f1) * (g1 - g0)
        frac = np.where(cell > 0, raw / np.where(cell > 0, cell, 1.0), 0.0)
        out = c0 + frac * (c1 - c0)
        out = np.where(x < self.grid[0], 0.0 if self.cdf[0] == 0 else self.cdf[0], out)
        return np.where(x >= self.grid[-1], self.cdf[-1], out)

    def to_json(self) -> str:
        doc = {
            "alpha": self.alpha,
            "t": self.t,
            "grid": [float(v) for v in self.grid],
            "pdf": [float(v) for v in self.pdf],
            "cdf": [float(v) for v in self.cdf],
            "tail_mass": self.tail_mass,
            "build_params": self.build_params,
        }
        return json.dumps(doc, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "DensityTable":
        doc = json.loads(text)
        return cls(
            grid=np.asarray(doc["grid"], dtype=float),
            pdf=np.asarray(doc["pdf"], dtype=float),
            cdf=np.asarray(doc["cdf"], dtype=float),
            tail_mass=float(doc["tail_mass"]),
            alpha=doc.get("alpha"),
            t=doc.get("t"),
            build_params=doc.get("build_params", {}),
        )


# ---------------------------------------------------------------------------
# q1: density of T_1


def _kanter_logk(u: np.ndarray | float, b: float) -> np.ndarray | float:
    return (
        (np.log(np.sin(b * u)) - np.log(np.sin(u))) / (1.0 - b)
        + np.log(np.sin((1.0 - b) * u))
        - np.log(np.sin(b * u))
    )


def q1_reference(beta: float, s: float, kind: str = "pdf") -> float:
    """Density (``kind='pdf'``) or CDF of the ``beta``-stable subordinator at ``s``.

    Adaptive quadrature of Kanter's representation; slow but accurate to
    about 1e-12 relative. Used to build tables and in tests.
    """
    if s <= 0:
        return 0.0
    g = beta / (1.0 - beta)
    log_y = -g * math.log(s)
    y = math.exp(log_y)
    k0 = (1.0 - beta) * beta**g
    if k0 * y > 745.0:
        return 0.0
    if kind == "pdf":
        def integrand(u: float) -> float:
            lk = _kanter_logk(u, beta)
            return math.exp(lk - math.exp(lk) * y) if lk < 700 else 0.0
    else:
        def integrand(u: float) -> float:
            lk = _kanter_logk(u, beta)
            return math.exp(-math.exp(lk) * y) if lk < 700 else 0.0

    points = None
    u_star = None
    if k0 * y < 1.0:
        u_star = brentq(lambda u: _kanter_logk(u, beta) + log_y, 1e-14, math.pi - 1e-15)
        points = [u_star]
    if u_star is not None and math.pi - u_star < 0.05:
        # the mass sits in a thin layer at pi; integrate in v = log(pi - u)
        v_star = math.log(math.pi - u_star)
        v_lo = v_star - 1.5 * (1.0 - beta) * math.log(1e3) - 2.0
        v_mid = math.log(0.05)
        near, _ = quad(
            lambda v: integrand(math.pi - math.exp(v)) * math.exp(v),
            v_lo, v_mid, points=[v_star], epsabs=0.0, epsrel=1e-13, limit=500,
        )
        far, _ = quad(integrand, 0.0, math.pi - 0.05, epsabs=0.0, epsrel=1e-13, limit=500)
        val = near + far
    else:
        val, _ = quad(integrand, 0.0, math.pi, points=points, epsabs=0.0, epsrel=1e-13, limit=500)
    if kind == "pdf":
        return g / math.pi * math.exp((-g - 1.0) * math.log(s)) * val
    return val / math.pi


class _PollardSeries:
    """Pollard's convergent series for the density and survival function."""

    def __init__(self, beta: float, nterms: int = 600):
        k = np.arange(1, nterms + 1, dtype=float)
        sgn = np.where(k % 2 == 1, 1.0, -1.0) * np.sign(np.sin(np.pi * k * beta))
        with np.errstate(divide="ignore"):
            lsin = np.log(np.abs(np.sin(np.pi * k * beta)))
        self.kb = k * beta
        self.pdf_logc = gammaln(k * beta + 1.0) - gammaln(k + 1.0) + lsin - math.log(math.pi)
        self.sf_logc = gammaln(k * beta) - gammaln(k + 1.0) + lsin - math.log(math.pi)
        self.sgn = sgn

    def _sum(self, logc: np.ndarray, s: np.ndarray) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        expo = logc[None, :] - self.kb[None, :] * np.log(s)[:, None]
        terms = self.sgn[None, :] * np.exp(expo)
        return terms.sum(axis=1)

    def pdf(self, s: np.ndarray) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return self._sum(self.pdf_logc, s) / s

    def sf(self, s: np.ndarray) -> np.ndarray:
        return self._sum(self.sf_logc, s)


class Q1Table:
    """Fast vectorized density and CDF of ``T_1`` for one ``alpha``.

    Below the crossover point ``s_cross`` the log-density is a cubic spline
    in ``log w`` with ``w = s**(-beta/(1-beta))``, built from
    :func:`q1_reference`; above it Pollard's series is summed directly.
    """

    def __init__(self, alpha: float, n_grid: int = 700):
        b = 1.0 / alpha
        self.alpha = alpha
        self.beta = b
        self.g = b / (1.0 - b)
        self.k0 = (1.0 - b) * b**self.g
        self.series = _PollardSeries(b)
        self.s_cross = self._find_crossover()
        w_lo = self.s_cross ** (-self.g)
        w_hi = 745.0 / self.k0
        lw = np.linspace(math.log(w_lo), math.log(w_hi), n_grid)
        s = np.exp(-lw / self.g)
        pdf = np.array([q1_reference(b, v, "pdf") for v in s])
        cdf = np.array([q1_reference(b, v, "cdf") for v in s])
        w = np.exp(lw)
        ok = (pdf > 0) & (cdf > 0)
        self.lw_max = lw[ok][-1]
        self.lw_min = lw[0]
        self._pdf_spline = CubicSpline(lw[ok], np.log(pdf[ok]) + self.k0 * w[ok])
        self._cdf_spline = CubicSpline(lw[ok], np.log(cdf[ok]) + self.k0 * w[ok])

    def _find_crossover(self) -> float:
        grid = np.geomspace(0.3, 60.0, 48)
        ref = np.array([q1_reference(self.beta, v, "pdf") for v in grid])
        ser = self.series.pdf(grid)
        bad = np.abs(ser - ref) > 1e-8 * np.abs(ref)
        if bad[-1]:
            raise NumericAccuracyError(
                "Pollard series and Kanter integral never agree", float(np.max(np.abs(ser - ref) / ref))
            )
        last_bad = np.nonzero(bad)[0]
        i = 0 if last_bad.size == 0 else last_bad[-1] + 1
        return float(grid[i])

    def _spline_eval(self, spline: CubicSpline, s: np.ndarray) -> np.ndarray:
        lw = -self.g * np.log(s)
        w = np.exp(np.minimum(lw, 700.0))
        out = np.zeros_like(s)
        ok = lw <= self.lw_max
        out[ok] = np.exp(spline(lw[ok]) - self.k0 * w[ok])
        return out

    def logpdf(self, s: np.ndarray | float) -> np.ndarray:
        """Log-density without underflow; the left tail is extrapolated linearly in ``log w``."""
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        if np.any(flat <= 0):
            raise DomainError("logpdf needs s > 0")
        out = np.empty_like(flat)
        hi = flat >= self.s_cross
        lo = ~hi
        if np.any(hi):
            out[hi] = np.log(self.series.pdf(flat[hi]))
        if np.any(lo):
            lw = -self.g * np.log(flat[lo])
            inner = np.minimum(lw, self.lw_max)
            h = self._pdf_spline(inner) + self._pdf_spline(self.lw_max, 1) * (lw - inner)
            out[lo] = h - self.k0 * np.exp(lw)
        return out.reshape(s.shape) if s.ndim else out[0]

    def pdf(self, s: np.ndarray | float) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        out = np.zeros_like(flat)
        pos = flat > 0
        hi = pos & (flat >= self.s_cross)
        lo = pos & ~hi
        if np.any(hi):
            out[hi] = self.series.pdf(flat[hi])
        if np.any(lo):
            out[lo] = self._spline_eval(self._pdf_spline, flat[lo])
        return out.reshape(s.shape) if s.ndim else out[0]

    def cdf(self, s: np.ndarray | float) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        out = np.zeros_like(flat)
        pos = flat > 0
        hi = pos & (flat >= self.s_cross)
        lo = pos & ~hi
        if np.any(hi):
            out[hi] = 1.0 - self.series.sf(flat[hi])
        if np.any(lo):
            out[lo] = self._spline_eval(self._cdf_spline, flat[lo])
        return out.reshape(s.shape) if s.ndim else out[0]

    def sf(self, s: np.ndarray | float) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        out = np.ones_like(flat)
        pos = flat > 0
        hi = pos & (flat >= self.s_cross)
        lo = pos & ~hi
        if np.any(hi):
            out[hi] = self.series.sf(flat[hi])
        if np.any(lo):
            out[lo] = 1.0 - self._spline_eval(self._cdf_spline, flat[lo])
        return out.reshape(s.shape) if s.ndim else out[0]


_cache_lock = threading.Lock()
_q1_cache: dict[float, Q1Table] = {}
_rho_cache: dict[tuple[float, float], DensityTable] = {}
_weight_cache: dict[tuple[float, float], DensityTable] = {}


def q1_table(params: StableParams | float) -> Q1Table:
    """Build-once cached :class:`Q1Table` for ``params.alpha``."""
    alpha = params.alpha if isinstance(params, StableParams) else float(params)
    with _cache_lock:
        tab = _q1_cache.get(alpha)
        if tab is None:
            tab = Q1Table(alpha)
            _q1_cache[alpha] = tab
    return tab


def q_density(params: StableParams, x: float | np.ndarray, s: float | np.ndarray) -> np.ndarray:
    """Density of ``T_x`` at ``s``: ``x**(-alpha) q1(s x**(-alpha))``."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(x <= 0) or np.any(s <= 0):
        raise DomainError("q_density needs x > 0 and s > 0")
    xa = x ** (-params.alpha)
    return xa * q1_table(params).pdf(s * xa)


def q_cdf(params: StableParams, x: float | np.ndarray, s: float | np.ndarray) -> np.ndarray:
    """CDF of ``T_x`` at ``s``."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(x <= 0):
        raise DomainError("q_cdf needs x > 0")
    return q1_table(params).cdf(np.maximum(s, 0.0) * x ** (-params.alpha))


def p_density(params: StableParams, s: float | np.ndarray, x: float | np.ndarray) -> np.ndarray:
    """Density of ``X_s`` at ``x <= 0`` through the ballot formula."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(s <= 0):
        raise DomainError("p_density needs s > 0")
    if np.any(x > 0):
        raise DomainError("p_density is only supported for x <= 0")
    ax = np.abs(x)
    zero = ax == 0
    safe = np.where(zero, 1.0, ax)
    val = (s / safe) * q_density(params, safe, np.broadcast_to(s, safe.shape) if s.ndim == 0 else s)
    at0 = s ** (-1.0 / params.alpha) * params.c_small
    return np.where(zero, at0, val)


# ---------------------------------------------------------------------------
# rho: density of Z^(t)_1

_CONTOUR_M = 2.0  # target size of lam*z at the real-axis crossing
_CONTOUR_L = 36.0  # truncation depth: exp(-L) at the far ends of the contour


def _clog1p(w: np.ndarray) -> np.ndarray:
    u = 1.0 + w
    du = u - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(u) * (w / du)
    return np.where(du == 0, w, out)


def _cexpm1(z: np.ndarray) -> np.ndarray:
    x, y = z.real, z.imag
    re = np.expm1(x) * np.cos(y) - 2.0 * np.sin(0.5 * y) ** 2
    im = np.exp(x) * np.sin(y)
    return re + 1j * im


def _z_transform(lam: np.ndarray, alpha: float, t: float) -> np.ndarray:
    # principal branches; both cuts lie on the negative real axis.
    # (lam+t)^a - lam^a is formed as lam^a * expm1(a*log1p(t/lam)) to avoid
    # cancellation when |lam| >> t.
    big = np.abs(lam) > 4.0 * t
    with np.errstate(divide="ignore", invalid="ignore"):
        diff_big = lam**alpha * _cexpm1(alpha * _clog1p(t / np.where(big, lam, 1.0)))
    diff = np.where(big, diff_big, (lam + t) ** alpha - lam**alpha)
    return np.exp(-(diff - t**alpha))


def _contour_inversion(
    z: np.ndarray, alpha: float, t: float, h_scale: float
) -> tuple[np.ndarray, np.ndarray]:
    # returns the rule and the sum of |terms|, which sets its rounding floor
    d_max = min(0.5 * math.pi, 0.5 * math.pi / (alpha - 1.0) - 0.5 * math.pi)
    delta = 0.6 * d_max
    width = min(delta, d_max - delta)
    out = np.empty_like(z)
    scale = np.empty_like(z)
    chunk = 256
    for i0 in range(0, z.size, chunk):
        zz = z[i0 : i0 + chunk]
        mu = _CONTOUR_M / zz / (1.0 - math.sin(delta))
        h = h_scale * 2.0 * math.pi * width / (_CONTOUR_L + _CONTOUR_M)
        th_max = np.arccosh((_CONTOUR_L / zz + mu) / (mu * math.sin(delta)))
        n = int(math.ceil(th_max.max() / h))
        th = np.arange(0, n + 1) * h
        arg = 1j * th[None, :] - delta
        lam = mu[:, None] * (1.0 + np.sin(arg))
        dlam = mu[:, None] * 1j * np.cos(arg)
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.exp(lam * zz[:, None]) * _z_transform(lam, alpha, t) * dlam
        vals = np.nan_to_num(vals, nan=0.0, posinf=0.0, neginf=0.0)
        weights = np.full(n + 1, 2.0)
        weights[0] = 1.0
        out[i0 : i0 + chunk] = h / (2.0 * math.pi) * (vals * weights).sum(axis=1).imag
        scale[i0 : i0 + chunk] = h / (2.0 * math.pi) * (np.abs(vals) * weights).sum(axis=1)
    return out, scale


def rho_density(
    params: StableParams, t: float, z: float | np.ndarray, rtol: float = 1e-6, atol: float = 1e-14
) -> np.ndarray:
    """Density of ``Z^(t)_1`` at ``z`` by contour inversion of its transform.

    The step is refined until two successive rules differ by less than
    ``rtol * |f| + atol / min(z, 1)`` plus the rounding floor of the sum;
    otherwise ``NumericAccuracyError``.
    Tiny negative values from cancellation are clipped at 0.
    """
    if t <= 0:
        raise DomainError("rho_density needs t > 0")
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z_arr < 0):
        raise DomainError("rho_density needs z >= 0")
    out = np.zeros_like(z_arr)
    pos = z_arr > 0
    if np.any(pos):
        zp = z_arr[pos]
        h_scale = 0.7
        coarse, _ = _contour_inversion(zp, params.alpha, t, h_scale)
        for _ in range(4):
            h_scale *= 0.7
            fine, mag = _contour_inversion(zp, params.alpha, t, h_scale)
            tol = rtol * np.abs(fine) + atol / np.minimum(zp, 1.0) + 1e3 * np.finfo(float).eps * mag
            err = np.max(np.abs(fine - coarse) / tol)
            coarse = fine
            if err < 1.0:
                break
        else:
            raise NumericAccuracyError("rho inversion did not converge", float(err) * rtol)
        out[pos] = np.maximum(coarse, 0.0)
    return out.reshape(np.shape(z)) if np.ndim(z) else out[0]


def _rho_grid(params: StableParams, t: float, per_decade: int = 200) -> np.ndarray:
    a = params.alpha
    mean = a * t ** (a - 1.0)
    small_scale = (a * t ** (a - 1.0)) ** (1.0 / (a - 1.0))
    lo = 1e-2 * min(small_scale, mean)
    # walk down until the mass below the grid is negligible
    for _ in range(60):
        if lo * rho_density(params, t, lo) < 1e-13:
            break
        lo *= 1e-2
    hi = 1e7 * max(mean, 1.0)
    n = int(per_decade * math.log10(hi / lo)) + 1
    return np.geomspace(lo, hi, n)


def rho_tail(params: StableParams, t: float, z_hi: float) -> tuple[float, float]:
    """Tail mass and tail first moment of ``Z^(t)_1`` beyond ``z_hi``.

    One-big-jump asymptotics: the tail follows the Levy density
    ``C x**(-1-alpha)`` shifted by the mean of the rest of the path.
    """
    a, c = params.alpha, params.c_big
    m = a * t ** (a - 1.0)
    zs = z_hi - m
    mass = c / a * zs ** (-a)
    first = c / (a - 1.0) * zs ** (1.0 - a) + m * mass
    return mass, first


def rho_table(params: StableParams, t: float) -> DensityTable:
    """Cached :class:`DensityTable` of ``rho^(t)_1`` with analytic tail mass."""
    key = (params.alpha, float(t))
    with _cache_lock:
        tab = _rho_cache.get(key)
    if tab is not None:
        return tab
    grid = _rho_grid(params, t)
    pdf = rho_density(params, t, grid)
    tail, _ = rho_tail(params, t, grid[-1])
    tab = DensityTable.from_pdf(
        grid, pdf, tail, log_cells=True, alpha=params.alpha, t=float(t),
        build_params={"scheme": "hyperbolic-contour trapezoid", "points": int(grid.size)},
    )
    if abs(tab.norm_defect) > 1e-4:
        raise NumericAccuracyError("rho table normalization", abs(tab.norm_defect))
    with _cache_lock:
        _rho_cache[key] = tab
    return tab


def rho_moments(params: StableParams, t: float) -> tuple[float, float]:
    """(total mass, mean) of the tabulated ``rho^(t)_1`` including the tail."""
    tab = rho_table(params, t)
    g, f = tab.grid, tab.pdf
    # integrate in log z, where z*f and z*z*f are smooth
    lg = np.log(g)
    zf, zzf = g * f, g * g * f
    mass = np.sum(0.5 * (zf[1:] + zf[:-1]) * np.diff(lg))
    first = np.sum(0.5 * (zzf[1:] + zzf[:-1]) * np.diff(lg))
    tail_mass, tail_first = rho_tail(params, t, g[-1])
    return float(mass + tail_mass), float(first + tail_first)


# ---------------------------------------------------------------------------
# semigroup weight and size-biased picks


def semigroup_weight(params: StableParams, t: float, z: float | np.ndarray) -> np.ndarray:
    """Mixing density of ``z`` in the semigroup at time ``t``."""
    z = np.asarray(z, dtype=float)
    if t <= 0 or np.any(z <= 0):
        raise DomainError("semigroup_weight needs t > 0 and z > 0")
    log_tilt = -(t**params.alpha) + t * z
    p = p_density(params, 1.0, -z)
    r = rho_density(params, t, z)
    # combine in logs: the tilt overflows where p has already underflowed
    with np.errstate(divide="ignore"):
        log_w = log_tilt + np.log(p) + np.log(r)
    return np.exp(log_w) / params.c_small


def weight_table(params: StableParams, t: float) -> DensityTable:
    """Cached table of :func:`semigroup_weight`, trimmed to its effective support."""
    key = (params.alpha, float(t))
    with _cache_lock:
        tab = _weight_cache.get(key)
    if tab is not None:
        return tab
    rt = rho_table(params, t)
    z = rt.grid
    p = p_density(params, 1.0, -z)
    with np.errstate(over="ignore", invalid="ignore"):
        w = np.exp(-(t**params.alpha) + t * z) * p * rt.pdf / params.c_small
    w = np.nan_to_num(w, nan=0.0, posinf=0.0)
    keep = np.nonzero(w > 1e-300)[0]
    hi = keep[-1] + 2 if keep.size else len(z)
    z, w = z[: min(hi, len(z))], w[: min(hi, len(z))]
    tab = DensityTable.from_pdf(
        z, w, 0.0, log_cells=True, alpha=params.alpha, t=float(t),
        build_params={"scheme": "weight from rho table", "points": int(z.size)},
    )
    if abs(tab.norm_defect) > 1e-3:
        raise NumericAccuracyError("semigroup weight normalization", abs(tab.norm_defect))
    with _cache_lock:
        _weight_cache[key] = tab
    return tab


def size_biased_density(params: StableParams, z: float, s: float | np.ndarray) -> np.ndarray:
    """Density at ``s`` of a size-biased pick from the jumps of ``T`` on ``[0, z]`` given ``T_z = 1``."""
    s = np.asarray(s, dtype=float)
    if z <= 0 or np.any((s <= 0) | (s >= 1)):
        raise DomainError("size_biased_density needs z > 0 and 0 < s < 1")
    num = params.c_small * z * q_density(params, z, 1.0 - s)
    return num / (s ** (1.0 / params.alpha) * q_density(params, z, 1.0))


def conditioned_jump_density(
    params: StableParams, x: float, total: float, y: float | np.ndarray
) -> np.ndarray:
    """Density at ``y`` of the size-biased first jump of ``T`` on ``[0, x]`` given ``T_x = total``."""
    y = np.asarray(y, dtype=float)
    if x <= 0 or total <= 0 or np.any((y <= 0) | (y >= total)):
        raise DomainError("conditioned_jump_density needs x, total > 0 and 0 < y < total")
    num = params.c_small * x * q_density(params, x, total - y)
    return num / (total * y ** (1.0 / params.alpha) * q_density(params, x, total))


def rho_inf_moment(params: StableParams, k: int) -> float:
    """``int y**(k/alpha) rho_inf(dy)`` for the Gamma(1 - 1/alpha) limit law."""
    if k < 1 or int(k) != k:
        raise DomainError("k must be a positive integer")
    a = params.alpha
    return math.exp(gammaln(1.0 + (k - 1.0) / a) - gammaln(1.0 - 1.0 / a))
