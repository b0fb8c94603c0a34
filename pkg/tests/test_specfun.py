import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from stabfrag.errors import DomainError
from stabfrag.specfun import (
    DensityTable,
    conditioned_jump_density,
    derive_constants,
    laplace_exponent,
    p_density,
    q_cdf,
    q_density,
    rho_density,
    rho_inf_moment,
    rho_moments,
    semigroup_weight,
    size_biased_density,
    weight_table,
)

P15 = derive_constants(1.5)
alphas = st.floats(1.05, 1.95)


def test_constants_at_three_halves_against_mpmath():
    # oracle: an independent Gamma implementation, values frozen below
    a = mpmath.mpf(3) / 2
    c_big = a * (a - 1) / mpmath.gamma(2 - a)
    c_small = 1 / (a * mpmath.gamma(1 - 1 / a))
    d_const = a * a * mpmath.gamma(2 - 1 / a) / mpmath.gamma(2 - a)
    assert P15.c_big == pytest.approx(float(c_big), rel=1e-14)
    assert P15.c_small == pytest.approx(float(c_small), rel=1e-14)
    assert P15.d_const == pytest.approx(float(d_const), rel=1e-14)
    assert P15.c_big == pytest.approx(0.4231421876608172, rel=1e-14)
    assert P15.c_small == pytest.approx(0.24885478260493016, rel=1e-14)
    assert P15.d_const == pytest.approx(1.1335719121851004, rel=1e-14)


@given(alphas)
def test_d_const_identity(a):
    p = derive_constants(a)
    assert p.d_const * a * p.c_small / p.c_big == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("a", [1.0, 2.0, 0.5, 2.5])
def test_alpha_outside_open_interval(a):
    with pytest.raises(DomainError):
        derive_constants(a, allow_edge=True)


def test_alpha_edge_needs_override():
    with pytest.raises(DomainError):
        derive_constants(1.01)
    assert derive_constants(1.01, allow_edge=True).alpha == 1.01


def test_laplace_exponent_examples():
    assert laplace_exponent(P15, "X", 0.0, 0.0) == 0.0
    assert laplace_exponent(P15, "Z_t", 0.0, 3.7) == 0.0
    assert laplace_exponent(P15, "T", 0.0, 4.0) == pytest.approx(4.0 ** (2 / 3))
    with pytest.raises(DomainError):
        laplace_exponent(P15, "X", 0.0, -1.0)


@given(alphas, st.floats(0, 10), st.floats(0, 10))
def test_laplace_exponents_compose(a, t, lam):
    p = derive_constants(a)
    lhs = laplace_exponent(p, "X_t", t, lam) - laplace_exponent(p, "Z_t", t, lam)
    assert lhs == pytest.approx(laplace_exponent(p, "X", t, lam), rel=1e-9, abs=1e-9)


def _log_quad(f, lo=-14.0, hi=40.0):
    val, _ = integrate.quad(lambda u: f(math.exp(u)) * math.exp(u), lo, hi, limit=400, epsabs=1e-13, epsrel=1e-11)
    return val


@pytest.mark.parametrize("a", [1.2, 1.5, 1.8])
def test_q_density_normalized(a):
    p = derive_constants(a)
    assert _log_quad(lambda s: float(q_density(p, 1.0, s))) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("lam", [0.1, 0.7, 3.0, 5.0])
def test_q_density_laplace(lam):
    val = _log_quad(lambda s: math.exp(-lam * s) * float(q_density(P15, 1.0, s)))
    assert val == pytest.approx(math.exp(-(lam ** (2 / 3))), abs=1e-6)


@given(st.floats(0.05, 20.0), st.floats(0.01, 50.0))
def test_q_density_scaling(x, s):
    lhs = q_density(P15, x, s)
    rhs = x ** (-1.5) * q_density(P15, 1.0, s * x ** (-1.5))
    assert lhs == pytest.approx(rhs, rel=1e-14, abs=0.0)


def test_q_cdf_matches_density():
    s = np.geomspace(0.05, 30, 5)
    for lo, hi in zip(s[:-1], s[1:]):
        mass, _ = integrate.quad(lambda v: float(q_density(P15, 1.0, v)), lo, hi)
        assert q_cdf(P15, 1.0, hi) - q_cdf(P15, 1.0, lo) == pytest.approx(mass, abs=1e-7)


def test_p_density_at_zero():
    assert p_density(P15, 1.0, 0.0) == pytest.approx(P15.c_small)
    assert p_density(P15, 4.0, 0.0) == pytest.approx(4.0 ** (-2 / 3) * P15.c_small)
    assert abs(p_density(P15, 1.0, -1e-4) - P15.c_small) < 1e-3


@given(st.floats(0.05, 10.0), st.floats(0.01, 10.0))
def test_ballot_consistency(s, ax):
    assert p_density(P15, s, -ax) * ax / s == pytest.approx(q_density(P15, ax, s), rel=1e-12)


def test_p_density_positive_argument():
    with pytest.raises(DomainError):
        p_density(P15, 1.0, 0.5)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_rho_moments(t):
    mass, mean = rho_moments(P15, t)
    assert mass == pytest.approx(1.0, abs=1e-4)
    assert mean == pytest.approx(1.5 * t**0.5, rel=1e-3)


def test_rho_against_laplace_transform():
    # real-axis transform of the density vs the closed form exp(-(lam+t)^a + lam^a + t^a)
    t = 0.5
    for lam in (0.3, 1.0):
        val = _log_quad(lambda z: math.exp(-lam * z) * float(rho_density(P15, t, z)), lo=-12.0, hi=5.0)
        assert val == pytest.approx(math.exp(-laplace_exponent(P15, "Z_t", t, lam)), abs=2e-5)


def test_rho_density_domain():
    with pytest.raises(DomainError):
        rho_density(P15, 0.0, 1.0)
    with pytest.raises(DomainError):
        rho_density(P15, 0.5, -1.0)


def test_semigroup_weight_normalized_by_quadrature():
    # adaptive quadrature of the raw weight, independent of the cached table
    val = _log_quad(lambda z: float(semigroup_weight(P15, 0.3, z)), lo=-9.0, hi=9.0)
    assert val == pytest.approx(1.0, abs=1e-3)
    assert abs(weight_table(P15, 0.3).norm_defect) < 1e-3


def test_semigroup_weight_finite_near_zero():
    w = semigroup_weight(P15, 0.3, np.array([1e-8, 1e-6, 1e-4]))
    assert np.all(np.isfinite(w))


def test_size_biased_matches_conditioned_jump():
    s = np.linspace(0.05, 0.95, 7)
    for z in (0.4, 1.0, 2.5):
        assert np.allclose(size_biased_density(P15, z, s), conditioned_jump_density(P15, z, 1.0, s), rtol=1e-14)


@pytest.mark.parametrize("z", [0.3, 1.0, 2.0])
def test_size_biased_density_normalized(z):
    lo, _ = integrate.quad(lambda s: float(size_biased_density(P15, z, s)), 0.0, 0.5, limit=200)
    hi, _ = integrate.quad(lambda r: float(size_biased_density(P15, z, 1.0 - r)), 0.0, 0.5, limit=200)
    assert lo + hi == pytest.approx(1.0, abs=1e-5)


def test_rho_inf_moment_values():
    assert rho_inf_moment(P15, 1) == pytest.approx(1.0 / math.gamma(1 / 3))
    assert round(rho_inf_moment(P15, 1), 5) == 0.37328
    assert rho_inf_moment(P15, 2) == pytest.approx(math.gamma(5 / 3) / math.gamma(1 / 3))
    with pytest.raises(DomainError):
        rho_inf_moment(P15, 0)


@pytest.mark.parametrize("a", [1.2, 1.5, 1.8])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_rho_inf_moment_against_gamma_law(a, k):
    # oracle: quadrature against the Gamma(1 - 1/alpha) density
    shape = 1.0 - 1.0 / a
    val, _ = integrate.quad(lambda y: y ** (k / a) * stats.gamma.pdf(y, shape), 0.0, np.inf, limit=200)
    assert rho_inf_moment(derive_constants(a), k) == pytest.approx(val, rel=1e-7)


def test_density_table_json_roundtrip():
    tab = weight_table(P15, 0.3)
    back = DensityTable.from_json(tab.to_json())
    assert np.array_equal(back.grid, tab.grid) and np.array_equal(back.cdf, tab.cdf)
    assert back.tail_mass == tab.tail_mass
    assert tab.cdf[-1] + tab.tail_mass == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=50)
@given(st.floats(1e-6, 1 - 1e-6))
def test_density_table_ppf_inverts_cdf(u):
    tab = weight_table(P15, 0.3)
    assert float(tab.cdf_at(tab.ppf(u))) == pytest.approx(u, abs=1e-9)
