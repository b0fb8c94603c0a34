"""Goodness-of-fit tests and moment diagnostics with pass/fail reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from .errors import DegenerateInputError, DomainError
from .frag import FragmentationTrace
from .rng import RngStream
from .sampler import sample_one_sided_stable, sample_semigroup_marginal, sample_small_time_limit
from .specfun import DensityTable, StableParams, weight_table

MIN_N = 20
DEFAULT_LEVEL = 0.01


@dataclass
class TestReport:
    """Outcome of one check. ``passed`` is decided by the test that built it."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    p_value: float
    n: int
    passed: bool
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value {self.p_value} outside [0, 1]")

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: statistic={self.statistic:.4g} p={self.p_value:.4g} n={self.n}"

    def to_record(self) -> dict:
        return {
            "name": self.name, "statistic": self.statistic, "p_value": self.p_value,
            "n": self.n, "pass": self.passed, "details": self.details,
        }


def _clean(sample, label: str) -> np.ndarray:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < MIN_N:
        raise DomainError(f"{label} needs at least {MIN_N} values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{label} contains non-finite values")
    if np.all(x == x[0]):
        raise DegenerateInputError(f"{label} is constant")
    return x


def ks_test(
    sample: Sequence[float],
    cdf: Callable[[np.ndarray], np.ndarray] | DensityTable | Sequence[float],
    name: str = "ks",
    level: float = DEFAULT_LEVEL,
) -> TestReport:
    """Kolmogorov-Smirnov test with the asymptotic p-value.

    ``cdf`` is a callable, a :class:`DensityTable` (one-sample form) or a
    second sample (two-sample form). Passes when ``p > level``.
    """
    x = _clean(sample, "sample")
    if isinstance(cdf, DensityTable):
        res = sps.kstest(x, cdf.cdf_at, method="asymp")
        details = {"form": "one-sample"}
    elif callable(cdf):
        res = sps.kstest(x, cdf, method="asymp")
        details = {"form": "one-sample"}
    else:
        y = _clean(cdf, "second sample")
        res = sps.ks_2samp(x, y, method="asymp")
        details = {"form": "two-sample", "n2": int(y.size)}
    p = float(min(max(res.pvalue, 0.0), 1.0))
    details["level"] = level
    return TestReport(name, float(res.statistic), p, int(x.size), p > level, details)


def moment_report(name: str, estimate: float, std_err: float, target: float, rel_tol: float) -> TestReport:
    """Pass when ``|estimate - target| < rel_tol * |target|``.

    The p-value is the two-sided normal one for ``estimate == target`` given
    ``std_err``; it is informative only and does not decide the verdict.
    """
    dev = estimate - target
    rel = abs(dev) / abs(target) if target else abs(dev)
    if std_err > 0:
        p = math.erfc(abs(dev) / std_err / math.sqrt(2.0))
    else:
        p = 1.0 if dev == 0 else 0.0
    details = {"estimate": estimate, "std_err": std_err, "target": target, "abs_dev": dev, "rel_dev": rel, "rel_tol": rel_tol}
    return TestReport(name, rel, p, 0, rel < rel_tol, details)


def rho_measure_moments(
    traces: FragmentationTrace | Sequence[FragmentationTrace], t: float, powers: Sequence[float]
) -> list[tuple[float, float, float]]:
    """``(r, mean, std_err)`` of ``sum_i F_i * (t**alpha * F_i)**r`` over replicates."""
    if isinstance(traces, FragmentationTrace):
        traces = [traces]
    if not traces:
        raise DomainError("no traces given")
    alpha = traces[0].meta["alpha"]
    scale = t**alpha
    states = [tr.state_at(t) for tr in traces]
    out = []
    for r in powers:
        vals = np.array([np.sum(s.parts * (scale * s.parts) ** r) for s in states])
        se = vals.std(ddof=1) / math.sqrt(vals.size) if vals.size > 1 else float("nan")
        out.append((float(r), float(vals.mean()), float(se)))
    return out


def small_time_report(
    params: StableParams, t_list: Sequence[float], n_rep: int, rng: RngStream, level: float = DEFAULT_LEVEL
) -> list[TestReport]:
    """Per ``t``: rescaled second-largest fragment and rescaled mixing weight
    against their small-time limits."""
    a = params.alpha
    t_arr = np.asarray(t_list, dtype=float)
    if t_arr.size == 0 or np.any(t_arr <= 0) or np.any(np.diff(t_arr) >= 0):
        raise DomainError("t_list must be positive and decreasing")
    limit_top = np.array([sample_small_time_limit(params, None, rng.child(1).child(i)).largest(1) for i in range(n_rep)])
    limit_z = sample_one_sided_stable(params, a - 1.0, a, rng.child(2), size=n_rep)
    reports = []
    for j, t in enumerate(t_arr):
        base = rng.child(3).child(j)
        f2 = np.empty(n_rep)
        for i in range(n_rep):
            f2[i] = sample_semigroup_marginal(params, float(t), 1e-300, base.child(i), resolve=2).largest(2)
        rep = ks_test(t ** (a / (1.0 - a)) * f2, limit_top, f"F2 small-time t={t:g}", level)
        rep.details["t"] = float(t)
        reports.append(rep)
        z = weight_table(params, float(t)).ppf(rng.child(4).child(j).generator.random(n_rep))
        rep = ks_test(t ** (1.0 / (1.0 - a)) * z, limit_z, f"weight small-time t={t:g}", level)
        rep.details["t"] = float(t)
        reports.append(rep)
    return reports
