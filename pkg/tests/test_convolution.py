import math

import numpy as np
import pytest
from scipy import integrate

from boltzwave import convolution as cv
from boltzwave import wave_patterns as wp


def gauss_pair(A, B, r):
    """e^{-|x|²/A} * e^{-|x|²/B} in R³."""
    return (math.pi * A * B / (A + B)) ** 1.5 * math.exp(-r * r / (A + B))


def test_lens_volume_of_unit_balls():
    ball = lambda u: 1.0 if u <= 1.0 else 0.0
    v = cv.spatial_convolve_radial(ball, ball, 1.0, f_points=(1.0,), g_points=(1.0,), g_support=1.0)
    assert v == pytest.approx(5 * math.pi / 12, rel=1e-8)


@pytest.mark.parametrize("r", [0.0, 1e-9, 0.5, 3.0])
def test_spatial_gaussian_pair(r):
    f = lambda u: math.exp(-u * u / 2.0)
    g = lambda u: math.exp(-u * u / 3.0)
    assert cv.spatial_convolve_radial(f, g, r) == pytest.approx(gauss_pair(2.0, 3.0, r), rel=1e-8)


def test_spatial_rejects_negative_radius():
    with pytest.raises(ValueError):
        cv.spatial_convolve_radial(lambda u: 1.0, lambda u: 1.0, -1.0)


@pytest.mark.parametrize("r,t", [(0.0, 2.0), (3.0, 5.0), (12.0, 20.0)])
def test_spacetime_diffusion_pair_closed_form(r, t):
    D = 1.5
    f = wp.diffusion_gauss(0.0, D)
    g = wp.diffusion_gauss(0.0, D)
    ref = integrate.quad(lambda s: gauss_pair(D * (1 + t - s), D * (1 + s), r), 0, t,
                         epsrel=1e-12)[0]
    res = cv.spacetime_convolve(f, g, r, t)
    assert res.converged
    assert res.value == pytest.approx(ref, rel=1e-6)
    assert res.error_estimate <= 1e-4 * ref


def test_spacetime_edge_cases():
    f = wp.diffusion_gauss(1.0)
    assert cv.spacetime_convolve(f, f, 1.0, 0.0).value == 0.0
    with pytest.raises(ValueError):
        cv.spacetime_convolve(f, f, -1.0, 1.0)


def test_spacetime_is_linear_in_amplitude():
    f, g = wp.huygens_gauss(2.0, 1.0, 1.0), wp.huygens_poly(4.0, 2.0, 1.0)
    a = cv.spacetime_convolve(f, g, 7.0, 10.0).value
    b = cv.spacetime_convolve(f.scaled(3.0), g, 7.0, 10.0).value
    assert b == pytest.approx(3 * a, rel=1e-6)


@pytest.mark.parametrize("f,g,r,t", [
    (wp.huygens_gauss(2.5, 1.0, 1.0), wp.huygens_poly(4.0, 2.0, 1.0), 20.0, 30.0),
    (wp.riesz_poly(2.0, 1.5), wp.diffusion_poly(3.0, 3.0), 4.0, 8.0),
])
def test_spacetime_against_mc(f, g, r, t):
    q = cv.spacetime_convolve(f, g, r, t)
    m, e = cv.mc_convolve_oracle(f, g, r, t, 400_000, seed=9)
    assert abs(m - q.value) <= max(0.02 * m, 3 * e)


def test_mc_oracle_validation_and_determinism():
    f = wp.diffusion_gauss(1.0)
    with pytest.raises(ValueError):
        cv.mc_convolve_oracle(f, f, 1.0, 1.0, mc_samples=100)
    assert cv.mc_convolve_oracle(f, f, 1.0, 2.0, 20_000, 4) == cv.mc_convolve_oracle(f, f, 1.0, 2.0, 20_000, 4)


def test_interaction_map_mass_matches_convolution():
    f, g = wp.huygens_gauss(2.5, 1.0, 1.0), wp.huygens_poly(4.0, 2.0, 1.0)
    m = cv.interaction_map(f, g, 30.0, 40.0, c=1.0)
    q = cv.spacetime_convolve(f, g, 30.0, 40.0)
    assert m.total == pytest.approx(q.value, rel=1e-3)
    assert m.mass.shape == (100, 120)
    assert 0 < m.strong_region_fraction <= 1


def test_interaction_centroid_between_cone_times():
    f, g = wp.huygens_gauss(2.5, 1.0, 1.0), wp.huygens_poly(4.0, 2.0, 1.0)
    m = cv.interaction_map(f, g, 50.0, 100.0, c=1.0)
    assert 25.0 <= m.s_centroid() <= 75.0
    rows = list(m.rows())
    assert len(rows) == 100 * 120 and all(row[2] >= 0 for row in rows)


def test_interaction_map_rejects_zero_time():
    with pytest.raises(ValueError):
        cv.interaction_map(wp.diffusion_gauss(1.0), wp.diffusion_gauss(1.0), 1.0, 0.0)
