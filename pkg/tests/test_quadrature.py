import math

import numpy as np
import pytest
from scipy import integrate

from boltzwave import quadrature as q


def test_spec_validation_and_helpers():
    with pytest.raises(ValueError):
        q.QuadratureSpec(rel_tol=0)
    with pytest.raises(ValueError):
        q.QuadratureSpec(mc_samples=100)
    s = q.QuadratureSpec()
    r = s.refined()
    assert r.rel_tol == s.rel_tol / 2 and r.max_subdivisions == 2 * s.max_subdivisions
    assert s.with_samples(50_000).mc_samples == 50_000
    assert s.to_dict()["seed"] == s.seed


def test_kronrod_rules_exact_on_polynomials():
    x, own = q.KRONROD_NODES, None
    assert q.KRONROD_WEIGHTS.sum() == pytest.approx(2.0, abs=1e-14)
    assert q.GAUSS_WEIGHTS.sum() == pytest.approx(2.0, abs=1e-14)
    # 7-point Gauss is exact to degree 13, 15-point Kronrod to degree 22
    assert (q.GAUSS_WEIGHTS * x ** 12).sum() == pytest.approx(2 / 13, rel=1e-13)
    assert (q.KRONROD_WEIGHTS * x ** 22).sum() == pytest.approx(2 / 23, rel=1e-12)


def test_adaptive_batch_many_owners():
    ks = np.array([0.5, 1.0, 3.0, 10.0])
    fun = lambda x, own: np.exp(-ks[own] * x) * np.sqrt(x)
    bps = [np.array([0.0, 1.0, 5.0, 40.0])] * len(ks)
    res = q.adaptive_batch(fun, bps, 1e-10, 1e-300)
    ref = [integrate.quad(lambda x: math.exp(-k * x) * math.sqrt(x), 0, 40, epsrel=1e-13)[0]
           for k in ks]
    assert res.converged.all()
    assert np.allclose(res.value, ref, rtol=1e-9)


def test_adaptive_batch_reports_nonconvergence():
    fun = lambda x, own: 1.0 / np.sqrt(np.abs(x - 0.3) + 1e-300)
    res = q.adaptive_batch(fun, [np.array([0.0, 1.0])], 1e-14, 1e-300, max_panels=8, max_rounds=3)
    assert not res.converged[0]


def test_adaptive_batch_empty_owner():
    res = q.adaptive_batch(lambda x, o: x, [np.array([1.0])], 1e-8, 1e-300)
    assert res.value[0] == 0.0 and res.converged[0]


def test_gauss_legendre_interval():
    x, w = q.gauss_legendre(10, 1.0, 3.0)
    assert (w * x ** 5).sum() == pytest.approx((3 ** 6 - 1) / 6, rel=1e-13)


def test_maxwellian_cubature_moments():
    nodes, w = q.maxwellian_cubature(8)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    r2 = np.sum(nodes ** 2, axis=1)
    assert (w * r2).sum() == pytest.approx(3.0, rel=1e-13)
    assert (w * r2 * r2).sum() == pytest.approx(15.0, rel=1e-13)


def test_rng_stream_reproducible_and_independent():
    a = [g.standard_normal(3) for g in q.rng_stream(7, 2)]
    b = [g.standard_normal(3) for g in q.rng_stream(7, 2)]
    assert np.array_equal(a[0], b[0]) and not np.array_equal(a[0], a[1])


def test_chunk_sizes():
    assert q.chunk_sizes(600_000) == [250_000, 250_000, 100_000]
    assert sum(q.chunk_sizes(12_345, 1000)) == 12_345
