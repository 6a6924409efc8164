import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import erf

from boltzwave import collision
from boltzwave.quadrature import QuadratureSpec

finite = st.floats(-20, 20, allow_nan=False)
vec = st.tuples(finite, finite, finite)


def unit_from(v):
    v = np.asarray(v, float)
    n = np.linalg.norm(v)
    return v / n if n > 1e-3 else np.array([0.0, 0.0, 1.0])


def nu_oracle(v):
    """2π E|v - X| for X standard normal in R³, in closed form."""
    if v == 0:
        return 4 * math.sqrt(2 * math.pi)
    return 2 * math.pi * (math.sqrt(2 / math.pi) * math.exp(-v * v / 2)
                          + (v + 1 / v) * erf(v / math.sqrt(2)))


# -- geometry ---------------------------------------------------------------
@given(vec, vec, vec)
@settings(max_examples=200, deadline=None)
def test_post_collision_conserves_momentum_and_energy(a, b, d):
    n = unit_from(d)
    out = collision.post_collision(a, b, n)
    a, b = np.asarray(a), np.asarray(b)
    assert np.allclose(out.xi_prime + out.xi_star_prime, a + b, atol=1e-12 * (1 + abs(a).max() + abs(b).max()))
    e0 = a @ a + b @ b
    assert abs(out.xi_prime @ out.xi_prime + out.xi_star_prime @ out.xi_star_prime - e0) <= 1e-12 * (1 + e0)


@given(vec, vec, vec)
@settings(max_examples=200, deadline=None)
def test_post_collision_is_an_involution(a, b, d):
    n = unit_from(d)
    out = collision.post_collision(a, b, n)
    back = collision.post_collision(out.xi_prime, out.xi_star_prime, n)
    scale = 1 + np.abs(a).max() + np.abs(b).max()
    assert np.allclose(back.xi_prime, a, atol=1e-12 * scale)
    assert np.allclose(back.xi_star_prime, b, atol=1e-12 * scale)


def test_post_collision_head_on_swaps_velocities():
    out = collision.post_collision((1, 0, 0), (-1, 0, 0), (1, 0, 0))
    assert np.allclose(out.xi_prime, (-1, 0, 0))
    assert np.allclose(out.xi_star_prime, (1, 0, 0))


def test_post_collision_grazing_leaves_velocities():
    out = collision.post_collision((1, 0, 0), (-1, 0, 0), (0, 1, 0))
    assert np.allclose(out.xi_prime, (1, 0, 0))


def test_direction_renormalized_when_nearly_unit():
    out = collision.post_collision((1, 0, 0), (0, 0, 0), (1 + 1e-8, 0, 0))
    assert np.allclose(out.xi_prime, 0, atol=1e-12)


def test_direction_rejected_when_far_from_unit():
    with pytest.raises(ValueError):
        collision.post_collision((1, 0, 0), (0, 0, 0), (2, 0, 0))


def test_velocity_validation():
    with pytest.raises(ValueError):
        collision.as_velocity((1, 2))
    with pytest.raises(ValueError):
        collision.as_velocity((1, np.nan, 0))


def test_maxwellian_normalized():
    val = integrate.quad(lambda r: 4 * math.pi * r * r * collision.maxwellian((r, 0, 0)), 0, 20)[0]
    assert val == pytest.approx(1.0, rel=1e-10)


# -- collision frequency ----------------------------------------------------
@pytest.mark.parametrize("v", [0.0, 0.3, 1.0, 3.0, 10.0, 50.0])
def test_collision_frequency_matches_closed_form(v):
    assert collision.collision_frequency((0, v, 0)) == pytest.approx(nu_oracle(v), rel=1e-9)


def test_collision_frequency_is_isotropic():
    a = collision.collision_frequency((3, 0, 0))
    b = collision.collision_frequency((0, 3 / math.sqrt(2), 3 / math.sqrt(2)))
    assert a == pytest.approx(b, rel=1e-12)


def test_collision_frequency_at_rest_frozen():
    # [DERIVED] 4√(2π) from the radial oracle
    assert collision.collision_frequency((0, 0, 0)) == pytest.approx(10.026513098524001, rel=1e-12)


def test_collision_frequency_mc_within_three_sigma():
    m, e = collision.collision_frequency_mc((1.0, 2.0, 0.0), 400_000, seed=11)
    assert abs(m - nu_oracle(math.sqrt(5))) <= 3 * e


def test_collision_frequency_mc_reproducible():
    assert collision.collision_frequency_mc((1, 0, 0), 20_000, 5) == \
        collision.collision_frequency_mc((1, 0, 0), 20_000, 5)


def test_nu_envelope_frozen_and_contains_grid():
    env = collision.nu_envelope(np.arange(0, 50.0001, 0.5))
    # [DERIVED] frozen from the closed-form oracle on the same grid
    ratios = [nu_oracle(s) / math.hypot(1, s) for s in np.arange(0, 50.0001, 0.5)]
    assert env.nu0 == pytest.approx(min(ratios), rel=1e-9)
    assert env.nu1 == pytest.approx(max(ratios), rel=1e-9)
    assert env.nu0 == pytest.approx(6.28444, abs=1e-5)
    assert env.contains(7.3, collision.collision_frequency((7.3, 0, 0)))
    assert not env.contains(0.0, 2 * env.nu1)


def test_nu_over_bracket_tends_to_two_pi():
    assert collision.collision_frequency((1000, 0, 0)) / math.hypot(1, 1000) == \
        pytest.approx(2 * math.pi, rel=1e-5)


def test_nu_envelope_validation():
    with pytest.raises(ValueError):
        collision.nu_envelope([])
    with pytest.raises(ValueError):
        collision.nu_envelope([-1.0])
    with pytest.raises(ValueError):
        collision.NuEnvelope(2.0, 1.0)


# -- fluid modes ------------------------------------------------------------
def test_macro_basis_orthonormal():
    assert np.allclose(collision.macro_gram(), np.eye(5), atol=1e-13)


@pytest.mark.parametrize("om", [(0, 0, 1), (1, 0, 0), (0.6, 0.8, 0)])
def test_sound_wave_eigenvalues(om):
    vals, _ = collision.sound_wave_eigensystem(om)
    c = math.sqrt(5 / 3)
    assert np.allclose(vals, [c, 0, 0, 0, -c], atol=1e-12)


def test_sound_mode_vectors_are_eigenvectors():
    om = np.array([0.0, 0.6, 0.8])
    A = collision.sound_wave_matrix(om)
    modes = collision.sound_mode_vectors(om)
    c = math.sqrt(5 / 3)
    assert np.allclose(A @ modes["E0"], c * modes["E0"], atol=1e-12)
    assert np.allclose(A @ modes["E1"], -c * modes["E1"], atol=1e-12)
    assert np.allclose(A @ modes["E2"], 0 * modes["E2"], atol=1e-12)
    for v in modes.values():
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-14)


def test_sound_wave_requires_unit_direction():
    with pytest.raises(ValueError):
        collision.sound_wave_matrix((0, 0, 2))


# -- kernel integrals -------------------------------------------------------
@pytest.mark.parametrize("beta", [8.0, 16.0])
def test_kernel_zero_velocity_oracle(beta):
    # |q·n| kernel without weight, at rest
    m, e = collision.kernel_integral_mc((0, 0, 0), beta, "weighted_gain_gain", 200_000, seed=3)
    assert abs(m - collision.kernel_zero_velocity_oracle(beta)) <= 3 * e


def test_kernel_mc_rejects_unknown_form():
    with pytest.raises(ValueError):
        collision.kernel_integral_mc((0, 0, 0), 8.0, "nope")


def test_k_weighted_bound_at_rest_finite_and_reproducible():
    mc = QuadratureSpec(mc_samples=100_000, seed=17)
    rep = collision.k_weighted_bound_check(8.0, 10.0, [(0, 0, 0)], mc)
    s = rep.samples[0]
    assert math.isfinite(s.ratio) and s.ratio_stderr > 0 and not s.inconclusive
    rep2 = collision.k_weighted_bound_check(8.0, 10.0, [(0, 0, 0)], mc.with_samples(200_000))
    s2 = rep2.samples[0]
    assert abs(s.ratio - s2.ratio) <= 3 * math.hypot(s.ratio_stderr, s2.ratio_stderr)


def test_k_weighted_ratio_decreases_with_beta_at_large_speed():
    mc = QuadratureSpec(mc_samples=100_000, seed=23)
    xi = [(0, 0, 60.0)]
    r8 = collision.k_weighted_bound_check(8.0, 10.0, xi, mc).samples[0]
    r16 = collision.k_weighted_bound_check(16.0, 10.0, xi, mc).samples[0]
    assert r16.ratio + 3 * r16.ratio_stderr < r8.ratio - 3 * r8.ratio_stderr


def test_k_weighted_validation():
    with pytest.raises(ValueError):
        collision.k_weighted_bound_check(4.0, 10.0, [(0, 0, 0)])
    with pytest.raises(ValueError):
        collision.k_weighted_bound_check(8.0, 10.0, [(0, 0, 0)], QuadratureSpec(mc_samples=20_000))


def test_empirical_eta_constants_cover_samples():
    mc = QuadratureSpec(mc_samples=100_000, seed=29)
    rep = collision.k_weighted_bound_check(16.0, 5.0, [(5, 0, 0), (0, 10, 0), (0, 0, 20)], mc)
    C, Cb = collision.empirical_eta_constants(rep)
    for s in rep.samples:
        if not s.inconclusive:
            assert s.ratio + 3 * s.ratio_stderr <= C / 16.0 + Cb / (1 + s.speed) ** 2 + 1e-12


def test_loss_integral_matches_direct_quadrature():
    beta = 8.0
    # at rest |ξ-ξ∗| = |ξ∗|: 2π ∫ |ξ∗|⟨ξ∗⟩^{-β} dξ∗
    direct = 2 * math.pi * integrate.quad(lambda r: 4 * math.pi * r ** 3 * (1 + r * r) ** (-beta / 2),
                                          0, np.inf)[0]
    assert collision.loss_integral(0.0, beta) == pytest.approx(direct, rel=1e-8)


def test_bilinear_constant_finite():
    best, rows = collision.bilinear_constant(16.0, [0.0, 3.0], QuadratureSpec(mc_samples=100_000))
    assert math.isfinite(best) and best > 0 and len(rows) == 2


@pytest.mark.parametrize("v", [0.0, 1.0, 200.0])
def test_loss_integral_sharp_weight_without_warnings(v):
    beta = 1000.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        val = collision.loss_integral(v, beta)
    # the weight concentrates near zero, so the integral tends to 2π|v| times its mass
    mass = integrate.quad(lambda r: 4 * math.pi * r * r * (1 + r * r) ** (-beta / 2), 0, 1)[0]
    if v >= 100:
        assert val == pytest.approx(2 * math.pi * v * mass, rel=1e-3)
    assert val > 0 and math.isfinite(val)
