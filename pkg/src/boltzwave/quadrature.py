"""Shared numerical plumbing: tolerance bundle, batched adaptive Gauss-Kronrod,
Gauss-Hermite velocity cubature and a reproducible random stream factory."""

from __future__ import annotations

from dataclasses import dataclass, asdict, replace
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

# 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1]
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])

KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss weights aligned with KRONROD_NODES (zero on Kronrod-only nodes)
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[[13, 11, 9]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and budgets shared by every integral in the package."""

    rel_tol: float = 1e-5
    abs_tol: float = 1e-300
    max_subdivisions: int = 4000
    mc_samples: int = 100_000
    seed: int = 20240601

    def __post_init__(self) -> None:
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")
        if self.mc_samples < 10_000:
            raise ValueError("mc_samples must be at least 1e4")

    def refined(self, factor: float = 0.5) -> "QuadratureSpec":
        return replace(self, rel_tol=self.rel_tol * factor,
                       abs_tol=self.abs_tol * factor,
                       max_subdivisions=self.max_subdivisions * 2)

    def with_samples(self, n: int) -> "QuadratureSpec":
        return replace(self, mc_samples=int(n))

    def to_dict(self) -> dict:
        return asdict(self)


class QuadratureError(RuntimeError):
    """Raised when an integral misses its tolerance and the caller asked to fail."""

    def __init__(self, message: str, value: float, error: float):
        super().__init__(f"{message} (value={value:.6g}, error estimate={error:.3g})")
        self.value = value
        self.error = error


@dataclass
class BatchResult:
    value: np.ndarray
    error: np.ndarray
    converged: np.ndarray
    evaluations: int


def gk15_panels(fun: Callable[[np.ndarray, np.ndarray], np.ndarray],
                lo: np.ndarray, hi: np.ndarray, owner: np.ndarray):
    """Apply the 7/15 pair to many panels at once.

    ``fun(x, owner)`` receives a (panels, 15) array of abscissae and the
    matching owner indices broadcast to the same shape.
    """
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * KRONROD_NODES[None, :]
    own = np.broadcast_to(owner[:, None], x.shape)
    vals = fun(x, own)
    k = half * (vals @ KRONROD_WEIGHTS)
    g = half * (vals @ GAUSS_WEIGHTS)
    err = np.abs(k - g)
    # QUADPACK-style sharpening of the raw difference estimate
    resasc = half * (np.abs(vals - (k / np.where(half == 0, 1, 2 * half))[:, None])
                     @ KRONROD_WEIGHTS)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(resasc > 0,
                          resasc * np.minimum(1.0, (200 * err / resasc) ** 1.5), err)
    err = np.maximum(scaled, 50 * np.finfo(float).eps * np.abs(k))
    return k, err


def adaptive_batch(fun: Callable[[np.ndarray, np.ndarray], np.ndarray],
                   breakpoints: list[np.ndarray], rel_tol: float, abs_tol: float,
                   max_panels: int = 4000, max_rounds: int = 60) -> BatchResult:
    """Integrate one function for many owners, each over its own panel list.

    ``breakpoints[i]`` is a sorted array of panel edges for owner ``i``.
    Panels are bisected where their error share is too large until every
    owner meets ``max(abs_tol, rel_tol*|I|)`` or the budget runs out.
    """
    n_own = len(breakpoints)
    lo_l, hi_l, own_l = [], [], []
    for i, bp in enumerate(breakpoints):
        bp = np.asarray(bp, dtype=float)
        if bp.size < 2:
            continue
        lo_l.append(bp[:-1])
        hi_l.append(bp[1:])
        own_l.append(np.full(bp.size - 1, i))
    if not lo_l:
        z = np.zeros(n_own)
        return BatchResult(z, z.copy(), np.ones(n_own, bool), 0)
    lo = np.concatenate(lo_l)
    hi = np.concatenate(hi_l)
    owner = np.concatenate(own_l)
    keep = hi > lo
    lo, hi, owner = lo[keep], hi[keep], owner[keep]
    val, err = gk15_panels(fun, lo, hi, owner)
    evals = 15 * lo.size
    done_val = np.zeros(n_own)
    done_err = np.zeros(n_own)
    converged = np.zeros(n_own, bool)
    for _ in range(max_rounds):
        tot = np.bincount(owner, val, n_own) + done_val
        tot_err = np.bincount(owner, err, n_own) + done_err
        tol = np.maximum(abs_tol, rel_tol * np.abs(tot))
        converged = tot_err <= tol
        counts = np.bincount(owner, minlength=n_own) + 0
        if converged.all() or lo.size == 0:
            break
        # retire panels of converged owners
        active = ~converged[owner]
        done_val += np.bincount(owner[~active], val[~active], n_own)
        done_err += np.bincount(owner[~active], err[~active], n_own)
        lo, hi, owner, val, err = lo[active], hi[active], owner[active], val[active], err[active]
        share = tol[owner] / np.maximum(counts[owner], 1)
        bad = err > share
        if not bad.any():
            # split the worst panel of every unconverged owner
            worst = np.full(n_own, -1.0)
            np.maximum.at(worst, owner, err)
            bad = err >= worst[owner]
        over = counts > max_panels
        bad &= ~over[owner]
        if not bad.any():
            break
        mid = 0.5 * (lo[bad] + hi[bad])
        nlo = np.concatenate([lo[bad], mid])
        nhi = np.concatenate([mid, hi[bad]])
        nown = np.concatenate([owner[bad], owner[bad]])
        nval, nerr = gk15_panels(fun, nlo, nhi, nown)
        evals += 15 * nlo.size
        good = ~bad
        lo = np.concatenate([lo[good], nlo])
        hi = np.concatenate([hi[good], nhi])
        owner = np.concatenate([owner[good], nown])
        val = np.concatenate([val[good], nval])
        err = np.concatenate([err[good], nerr])
        order = np.argsort(owner, kind="stable")
        lo, hi, owner, val, err = lo[order], hi[order], owner[order], val[order], err[order]
    tot = np.bincount(owner, val, n_own) + done_val
    tot_err = np.bincount(owner, err, n_own) + done_err
    converged = tot_err <= np.maximum(abs_tol, rel_tol * np.abs(tot))
    return BatchResult(tot, tot_err, converged, evals)


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def maxwellian_cubature(n: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite nodes (N, 3) and weights with sum(w*g) = ∫ g M dξ."""
    x, w = hermegauss(n)
    w = w / np.sqrt(2 * np.pi)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    nodes = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    return nodes, W.ravel()


def rng_stream(seed: int, n_chunks: int) -> list[np.random.Generator]:
    """Independent counter-based generators, one per chunk, fixed by ``seed``."""
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    return [np.random.Generator(np.random.Philox(s)) for s in children]


def chunk_sizes(total: int, chunk: int = 250_000) -> list[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes
