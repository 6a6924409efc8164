import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boltzwave import weights
from boltzwave.quadrature import QuadratureSpec

nonneg = st.floats(0, 300, allow_nan=False)


def test_rho_piecewise():
    # ⟨ξ⟩ = √2 at |ξ| = 1
    assert weights.rho((1, 0, 0), 0.5) == pytest.approx(math.sqrt(2) * 0.5)
    assert weights.rho((1, 0, 0), 10.0) == pytest.approx(2.0)
    assert weights.rho((0, 0, 0), 0.0) == 0.0


def test_rho_rejects_negative_time():
    with pytest.raises(ValueError):
        weights.rho((0, 0, 0), -1.0)


@given(nonneg, nonneg, nonneg)
@settings(max_examples=500, deadline=None)
def test_superadditivity_property(a, b, t):
    res = weights.rho_superadditivity_check(a, b, t)
    assert res.slack >= -1e-9 * (1 + a * a + b * b)


def test_superadditivity_equality_at_origin():
    res = weights.rho_superadditivity_check(0.0, 0.0, 0.0)
    assert res.ok and res.slack == 0.0


def test_superadditivity_validation():
    with pytest.raises(ValueError):
        weights.rho_superadditivity_check(-1.0, 0.0, 0.0)


def test_grid_scan_small_grid_matches_pointwise():
    scan = weights.superadditivity_grid_scan(step=1.0, a_max=10.0, t_max=20.0)
    assert scan.checks == 11 * 11 * 21
    assert scan.violations == 0
    brute = min(weights.rho_superadditivity_check(a, b, t).slack
                for a in range(11) for b in range(11) for t in range(21))
    assert scan.min_slack == pytest.approx(brute, abs=1e-12)
    assert len(scan.by_t) == 21


def test_grid_scan_detects_a_planted_violation():
    # a negative tolerance turns the zero-slack corner into a violation
    assert weights.superadditivity_grid_scan(1.0, 2.0, 2.0, tol=-1e-9).violations > 0


def test_rho_weight_validation():
    assert weights.RhoWeight(0.2).admissible_for(6.0)
    assert not weights.RhoWeight(0.2).admissible_for(0.3)
    for k in (0.0, 0.25, 0.3):
        with pytest.raises(ValueError):
            weights.RhoWeight(k)


def test_spacelike_weight_validation():
    with pytest.raises(ValueError):
        weights.SpaceLikeWeight(1.0, 1.0)          # M below the cone speed
    with pytest.raises(ValueError):
        weights.SpaceLikeWeight(1.5, 0.0)


@given(st.floats(0, 50), st.tuples(*[st.floats(-30, 30)] * 3), st.tuples(*[st.floats(-10, 10)] * 3))
@settings(max_examples=100, deadline=None)
def test_weight_rate_matches_finite_difference(t, x, xi):
    w = weights.SpaceLikeWeight(1.5, 2.0)
    exact = float(weights.weight_rate(w, t, x, xi))
    fd = weights.weight_rate_fd(w, t, x, xi, h=1e-4)
    assert exact == pytest.approx(fd, abs=1e-6 * (1 + np.abs(xi).max()))


def test_weight_rate_bounded_by_speed():
    w = weights.SpaceLikeWeight(1.5, 2.0)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1000, 3)) * 10
    xi = rng.standard_normal((1000, 3)) * 5
    rate = weights.weight_rate(w, 0.0, x, xi)
    assert np.all(rate <= (-w.M + np.linalg.norm(xi, axis=1)) / w.ell + 1e-12)


def test_dissipativity_margin_and_ell_search():
    ell = weights.ell_search(1.5, speeds=tuple(np.linspace(0, 50, 26)))
    res = weights.dissipativity_scan(weights.SpaceLikeWeight(1.5, ell),
                                     speeds=tuple(np.linspace(0, 50, 26)))
    assert res.passed and res.min_margin >= 0.75
    smaller = weights.dissipativity_scan(weights.SpaceLikeWeight(1.5, ell / 2),
                                         speeds=tuple(np.linspace(0, 50, 26)))
    assert not smaller.passed


def test_gaussian_damping_max_closed_form():
    # for κ < 1/4 the sup sits at ξ = 0 with ρ = 1: e^κ (2π)^{-3/4}
    m, loc = weights.gaussian_damping_max(0.2)
    assert m == pytest.approx(math.exp(0.2) * (2 * math.pi) ** -0.75, rel=1e-12)
    assert m <= weights.E_QUARTER
    assert loc[0] == 0.0


def test_semigroup_damping_has_no_violations():
    viol, margin = weights.semigroup_damping_check(6.28444, 0.2, speeds=np.linspace(0, 20, 21),
                                                   times=np.linspace(0, 20, 41))
    assert viol == 0 and margin >= -1e-12


def test_semigroup_damping_fails_for_oversized_rate():
    viol, _ = weights.semigroup_damping_check(50.0, 0.2, speeds=[0.0, 5.0], times=[0.0, 1.0])
    assert viol > 0


def test_weighted_kernel_check_conclusive():
    rep = weights.weighted_kernel_check(8.0, 0.2, [((0, 0, 0), 0.0), ((3, 0, 0), 5.0)],
                                        QuadratureSpec(mc_samples=100_000))
    assert all(not s.inconclusive for s in rep.samples)
    assert rep.meta["gaussian_damping_max"] <= weights.E_QUARTER


def test_weighted_kernel_check_validation():
    with pytest.raises(ValueError):
        weights.weighted_kernel_check(8.0, 0.3, [((0, 0, 0), 0.0)])
