import numpy as np
import pytest
from scipy import integrate, stats

from stabfrag.errors import DomainError, PathologicalInputError
from stabfrag.rng import RngStream
from stabfrag.sampler import (
    DislocationSampler,
    compensator_drift,
    default_dust,
    refine_jump_field,
    residual_mass,
    sample_conditioned_jump,
    sample_conditioned_partition,
    sample_jump_field,
    sample_one_sided_stable,
    sample_semigroup_marginal,
    sample_small_time_limit,
    sample_subordinator_bridge,
    size_biased_sequence,
)
from stabfrag.specfun import derive_constants, q1_reference, q_cdf
from stabfrag.stats import ks_test

P15 = derive_constants(1.5)


@pytest.fixture(scope="module")
def dislocation():
    return DislocationSampler.calibrate(P15, 0.3, RngStream(3, 1), n_accept=1000)


def test_one_sided_stable_against_levy_law():
    # index 1/2 with Laplace exp(-2 sqrt(lam)) is the Levy law with scale 2
    draws = sample_one_sided_stable(P15, 0.5, 2.0, RngStream(1), size=5000)
    assert ks_test(draws, stats.levy(scale=2.0).cdf, level=0.01).passed


def test_one_sided_stable_against_table():
    draws = sample_one_sided_stable(P15, P15.beta, 1.0, RngStream(2), size=5000)
    assert ks_test(draws, lambda s: q_cdf(P15, 1.0, s), level=0.01).passed


def test_one_sided_stable_domain():
    with pytest.raises(DomainError):
        sample_one_sided_stable(P15, 1.2, 1.0, RngStream(0))
    assert isinstance(sample_one_sided_stable(P15, 0.5, 1.0, RngStream(0)), float)


def test_jump_field_shape():
    led = sample_jump_field(P15, 2.0, 0.1, RngStream(4))
    mean = 2.0 * P15.c_big * 0.1**-1.5 / 1.5
    assert abs(led.n - mean) < 5 * mean**0.5
    assert np.all(led.mags >= 0.1) and np.all(np.diff(led.times) > 0)
    assert led.drift_rate == pytest.approx(compensator_drift(P15, 0.1))
    assert compensator_drift(P15, 0.1) == pytest.approx(-P15.c_big * 0.1**-0.5 / 0.5)


def test_jump_field_reproducible():
    a = sample_jump_field(P15, 1.0, 0.1, RngStream(9, 2))
    b = sample_jump_field(P15, 1.0, 0.1, RngStream(9, 2))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.mags, b.mags)


def test_refine_keeps_old_jumps():
    old = sample_jump_field(P15, 1.0, 0.2, RngStream(5))
    new = refine_jump_field(P15, old, 0.2, 0.05, RngStream(6))
    assert set(old.times.tolist()) <= set(new.times.tolist())
    added = new.mags[~np.isin(new.times, old.times)]
    assert np.all((added > 0.05) & (added <= 0.2))
    assert new.drift_rate == pytest.approx(compensator_drift(P15, 0.05))
    with pytest.raises(DomainError):
        refine_jump_field(P15, old, 0.2, 0.3, RngStream(6))


def test_residual_mass_by_quadrature():
    val, _ = integrate.quad(lambda y: y * P15.c_small * y ** (-1 - P15.beta), 0.0, 0.01)
    assert residual_mass(P15, 1.0, 0.01) == pytest.approx(val, rel=1e-8)
    assert residual_mass(P15, 2.0, 0.01) == pytest.approx(2 * val, rel=1e-8)


@pytest.fixture(scope="module")
def first_jump_cdf():
    # oracle from the Kanter quadrature: y = w**3 absorbs the y**-beta singularity
    w = np.linspace(0.0, 1.0, 401)
    q0 = q1_reference(P15.beta, 1.0)
    f = np.array([3 * P15.c_small * q1_reference(P15.beta, 1.0 - v**3) / q0 for v in w])
    cdf = integrate.cumulative_trapezoid(f, w, initial=0.0)
    return w**3, cdf


def test_first_jump_oracle_normalized(first_jump_cdf):
    assert first_jump_cdf[1][-1] == pytest.approx(1.0, abs=1e-4)


def test_conditioned_jump_law(first_jump_cdf):
    y, cdf = first_jump_cdf
    draws = [sample_conditioned_jump(P15, 1.0, 1.0, RngStream(7).child(i)) for i in range(4000)]
    assert ks_test(draws, lambda v: np.interp(v, y, cdf / cdf[-1]), level=0.01).passed


def test_conditioned_jump_scaling(first_jump_cdf):
    # x = 2, total = 2**alpha has the same law for y / total
    y, cdf = first_jump_cdf
    tot = 2.0**1.5
    draws = [sample_conditioned_jump(P15, 2.0, tot, RngStream(8).child(i)) / tot for i in range(3000)]
    assert ks_test(draws, lambda v: np.interp(v, y, cdf / cdf[-1]), level=0.01).passed


def test_first_pick_of_sequence_is_the_conditioned_jump(first_jump_cdf):
    y, cdf = first_jump_cdf
    firsts = [size_biased_sequence(P15, 1.0, 1.0, 0.5, RngStream(10).child(i))[0][0] for i in range(3000)]
    assert ks_test(firsts, lambda v: np.interp(v, y, cdf / cdf[-1]), level=0.01).passed


def test_conditioned_partition_contract():
    part = sample_conditioned_partition(P15, 1.0, 1.0, 1e-3, RngStream(11))
    assert part.total == 1.0 and part.remainder < 1e-3 and part.resolved is None
    top = sample_conditioned_partition(P15, 1.0, 1.0, 1e-300, RngStream(11), resolve=2)
    assert top.resolved == 2 and top.parts.size >= 2
    assert top.largest(2) > top.remainder


def test_resolve_certifies_the_same_top_parts():
    # same stream: the resolved chain is a prefix of the full one
    full = sample_conditioned_partition(P15, 1.0, 1.0, 1e-3, RngStream(12))
    top = sample_conditioned_partition(P15, 1.0, 1.0, 1e-300, RngStream(12), resolve=1)
    assert top.largest(1) == full.largest(1)


def test_conditioned_partition_errors():
    with pytest.raises(DomainError):
        sample_conditioned_partition(P15, 1.0, 1.0, 2.0, RngStream(0))
    with pytest.raises(PathologicalInputError):
        sample_conditioned_partition(P15, 1.0, 1.0, 1e-12, RngStream(0), max_picks=10)


def test_default_dust_bounds():
    assert default_dust(P15) == pytest.approx(max(1e-6, 1e5**-0.5))
    assert default_dust(derive_constants(1.95), total=2.0) == pytest.approx(2.0 * 1e5**-0.95)


def test_bridge():
    led = sample_subordinator_bridge(P15, 1.0, 1.0, 1e-3, RngStream(13))
    assert led.horizon == 1.0 and led.drift_rate == 0.0
    assert np.all((led.times >= 0) & (led.times <= 1))
    assert 1.0 - 1e-3 < led.mags.sum() <= 1.0 + 1e-12


def test_semigroup_marginal_mean_largest():
    tops = [sample_semigroup_marginal(P15, 0.5, 1e-300, RngStream(14).child(i), resolve=1).largest(1) for i in range(400)]
    assert 0.0 < np.mean(tops) < 1.0
    with pytest.raises(DomainError):
        sample_semigroup_marginal(P15, 0.0, None, RngStream(0))


def test_dislocation_draw(dislocation):
    for i in range(50):
        part = dislocation.draw(RngStream(15).child(i), piece=1e-4)
        assert part.total == 1.0
        assert 1.0 - part.largest(1) > 0.3
    assert dislocation.tail_bound < 0.01 * dislocation.rate
    assert dislocation.rate > 0 and dislocation.rate_se > 0


def test_dislocation_piece_rule_bounds_leftover(dislocation):
    rems = [dislocation.draw(RngStream(16).child(i), piece=1e-3).remainder for i in range(50)]
    assert max(rems) <= residual_mass(P15, 1.0, 1e-3) * 60


def test_dislocation_calibrate_domain():
    with pytest.raises(DomainError):
        DislocationSampler.calibrate(P15, 1.0, RngStream(0))


def test_small_time_limit_partition():
    part = sample_small_time_limit(P15, 1e-4, RngStream(17))
    assert np.all(np.diff(part.parts) <= 0)
    assert part.remainder < part.largest(1)
    with pytest.raises(DomainError):
        sample_small_time_limit(P15, 0.0, RngStream(17))
