import numpy as np
import pytest
from scipy import stats as sps

from stabfrag.errors import DegenerateInputError, DomainError
from stabfrag.frag import FragmentationTrace
from stabfrag.partition import MassPartition
from stabfrag.rng import RngStream
from stabfrag.specfun import derive_constants, weight_table
from stabfrag.stats import TestReport, ks_test, moment_report, rho_measure_moments, small_time_report

P15 = derive_constants(1.5)


def test_ks_one_sample_uniform():
    x = RngStream(1).generator.random(2000)
    rep = ks_test(x, sps.uniform.cdf, "u")
    assert rep.passed and rep.details["form"] == "one-sample" and rep.n == 2000
    assert not ks_test(x**2, sps.uniform.cdf).passed


def test_ks_two_sample():
    g = RngStream(2).generator
    rep = ks_test(g.normal(size=1000), g.normal(size=800))
    assert rep.passed and rep.details == {"form": "two-sample", "n2": 800, "level": 0.01}
    assert not ks_test(g.normal(size=1000), g.normal(0.5, size=1000)).passed


def test_ks_against_density_table():
    tab = weight_table(P15, 0.3)
    x = tab.ppf(RngStream(3).generator.random(3000))
    assert ks_test(x, tab).passed


def test_ks_matches_scipy():
    x = RngStream(4).generator.normal(size=500)
    ref = sps.kstest(x, sps.norm.cdf, method="asymp")
    rep = ks_test(x, sps.norm.cdf)
    assert rep.statistic == ref.statistic and rep.p_value == pytest.approx(ref.pvalue)


@pytest.mark.parametrize("bad", [np.ones(50), np.arange(5.0), np.r_[np.arange(30.0), np.nan]])
def test_ks_input_checks(bad):
    with pytest.raises((DomainError, DegenerateInputError)):
        ks_test(bad, sps.norm.cdf)


def test_moment_report():
    rep = moment_report("m", 0.35, 0.01, 1 / 3, 0.1)
    assert rep.passed and rep.statistic == pytest.approx(0.05)
    assert rep.p_value == pytest.approx(sps.norm.sf(0.05 / 3 / 0.01) * 2)
    assert not moment_report("m", 0.4, 0.01, 1 / 3, 0.1).passed
    assert moment_report("m", 0.0, 0.0, 0.0, 0.1).p_value == 1.0


def test_report_record_and_line():
    rep = TestReport("x", 0.1, 0.5, 10, True, {"a": 1})
    assert rep.line() == "PASS x: statistic=0.1 p=0.5 n=10"
    assert rep.to_record()["pass"] is True
    with pytest.raises(ValueError):
        TestReport("x", 0.1, 1.5, 10, True)


def test_rho_measure_moments_by_hand():
    states = [MassPartition(np.array([0.5, 0.25]), 0.25, 1.0), MassPartition(np.array([0.5]), 0.5, 1.0)]
    traces = [FragmentationTrace(np.array([2.0]), [s], {"alpha": 1.5}) for s in states]
    (r, mean, se), = rho_measure_moments(traces, 2.0, [1.0])
    scale = 2.0**1.5
    vals = [scale * (0.25 + 0.0625), scale * 0.25]
    assert r == 1.0 and mean == pytest.approx(np.mean(vals)) and se == pytest.approx(np.std(vals, ddof=1) / np.sqrt(2))
    with pytest.raises(DomainError):
        rho_measure_moments([], 1.0, [1.0])


def test_small_time_report_shape():
    reps = small_time_report(P15, [1e-2], 300, RngStream(5))
    assert len(reps) == 2 and all(r.n == 300 for r in reps)
    with pytest.raises(DomainError):
        small_time_report(P15, [1e-3, 1e-2], 30, RngStream(5))
