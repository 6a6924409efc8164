"""Velocity-time weight ρ(ξ,t), the space-like weight w(t,x) and checks of
their inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .collision import (KernelReport, KernelSample, as_velocity, collision_frequency,
                        kernel_integral_mc, _trend)
from .quadrature import QuadratureSpec
from .wave_patterns import SOUND_SPEED

E_QUARTER = math.exp(0.25)


def bracket(a):
    return np.hypot(1.0, a)


def rho_bar(a, t):
    """ρ̄(a,t) = ⟨a⟩(⟨a⟩ ∧ t) for a speed a ≥ 0."""
    b = bracket(np.asarray(a, dtype=float))
    out = b * np.minimum(b, t)
    return float(out) if np.ndim(out) == 0 else out


def rho(xi, t: float):
    """ρ(ξ,t) = ⟨ξ⟩(⟨ξ⟩ ∧ t)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    return rho_bar(np.linalg.norm(as_velocity(xi), axis=-1), t)


@dataclass(frozen=True)
class RhoWeight:
    kappa: float

    def __post_init__(self):
        if not 0 < self.kappa < 0.25:
            raise ValueError("kappa must lie in (0, 1/4)")

    def admissible_for(self, nu0: float) -> bool:
        return self.kappa < min(0.25, nu0 / 2)

    def __call__(self, xi, t):
        return np.exp(self.kappa * rho(xi, t))


@dataclass(frozen=True)
class SuperadditivityResult:
    ok: bool
    slack: float


def rho_superadditivity_check(a: float, b: float, t: float) -> SuperadditivityResult:
    """Slack ρ̄(a,t) + ρ̄(b,t) - ρ̄(√(a²+b²),t) and its sign."""
    if min(a, b, t) < 0:
        raise ValueError("a, b, t must be nonnegative")
    slack = rho_bar(a, t) + rho_bar(b, t) - rho_bar(math.hypot(a, b), t)
    return SuperadditivityResult(slack >= 0, float(slack))


@dataclass
class GridScan:
    checks: int
    violations: int
    min_slack: float
    argmin: tuple[float, float, float]
    step: float
    by_t: list[tuple[float, float, int]] = field(default_factory=list)   # (t, min slack, violations)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.pop("by_t")
        return d


def superadditivity_grid_scan(step: float = 0.25, a_max: float = 100.0, t_max: float = 200.0,
                              tol: float = 0.0) -> GridScan:
    """Brute-force slack over a, b ∈ [0, a_max] and t ∈ [0, t_max] on a uniform grid."""
    if step <= 0:
        raise ValueError("step must be positive")
    a = np.arange(0.0, a_max + step / 2, step)
    ts = np.arange(0.0, t_max + step / 2, step)
    A, B = np.meshgrid(a, a, indexing="ij")
    ba, bb = bracket(A), bracket(B)
    bc = np.sqrt(1.0 + A * A + B * B)
    viol, best, arg, by_t = 0, math.inf, (0.0, 0.0, 0.0), []
    for t in ts:
        slack = ba * np.minimum(ba, t) + bb * np.minimum(bb, t) - bc * np.minimum(bc, t)
        nv = int(np.count_nonzero(slack < -tol))
        viol += nv
        k = int(np.argmin(slack))
        by_t.append((float(t), float(slack.flat[k]), nv))
        if slack.flat[k] < best:
            best = float(slack.flat[k])
            arg = (float(A.flat[k]), float(B.flat[k]), float(t))
    return GridScan(a.size * a.size * ts.size, viol, best, arg, step, by_t)


# -- space-like weight ------------------------------------------------------
@dataclass(frozen=True)
class SpaceLikeWeight:
    """w(t,x) = exp((⟨x⟩ - M t)/ℓ) with cone slope c < M < c+1."""

    M: float
    ell: float
    c: float = SOUND_SPEED

    def __post_init__(self):
        if not self.c < self.M < self.c + 1:
            raise ValueError("M must lie strictly between c and c+1")
        if self.ell <= 0:
            raise ValueError("ell must be positive")


def _xnorm(x):
    x = np.asarray(x, dtype=float)
    return np.linalg.norm(x, axis=-1) if x.ndim and x.shape[-1] == 3 else np.abs(x)


def spacelike_weight(w: SpaceLikeWeight, t, x):
    return np.exp((bracket(_xnorm(x)) - w.M * np.asarray(t, float)) / w.ell)


def weight_rate(w: SpaceLikeWeight, t, x, xi):
    """w⁻¹(∂_t w + ξ·∇ₓ w) = -M/ℓ + ξ·x/(ℓ⟨x⟩)."""
    x = np.asarray(x, dtype=float)
    xi = as_velocity(xi)
    return -w.M / w.ell + np.sum(xi * x, axis=-1) / (w.ell * bracket(np.linalg.norm(x, axis=-1)))


def weight_rate_fd(w: SpaceLikeWeight, t: float, x, xi, h: float = 1e-5) -> float:
    """Central-difference estimate of the same rate from w itself."""
    x = np.asarray(x, dtype=float)
    xi = as_velocity(xi)
    w0 = float(spacelike_weight(w, t, x))
    dt = (float(spacelike_weight(w, t + h, x)) - float(spacelike_weight(w, t - h, x))) / (2 * h)
    grad = np.empty(3)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        grad[k] = (float(spacelike_weight(w, t, x + e)) - float(spacelike_weight(w, t, x - e))) / (2 * h)
    return (dt + float(xi @ grad)) / w0


@dataclass
class DissipativityScan:
    ell: float
    min_margin: float
    worst: tuple[float, float, float]
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def dissipativity_scan(w: SpaceLikeWeight, speeds: Sequence[float] = tuple(np.linspace(0, 50, 101)),
                       radii: Sequence[float] = (0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0),
                       n_angles: int = 33, nu=None) -> DissipativityScan:
    """min over the grid of (ν(ξ) + rate)/ν(ξ); passes when it is ≥ 3/4.

    x runs along a fixed axis and ξ over angles θ ∈ [0, π] to it.
    """
    nu = nu or (lambda s: collision_frequency((s, 0.0, 0.0)))
    cos = np.cos(np.linspace(0.0, math.pi, n_angles))
    best, worst = math.inf, (0.0, 0.0, 0.0)
    for s in speeds:
        nv = nu(s)
        for r in radii:
            rate = -w.M / w.ell + s * cos * r / (w.ell * math.hypot(1.0, r))
            m = (nv + rate) / nv
            k = int(np.argmin(m))
            if m[k] < best:
                best, worst = float(m[k]), (float(s), float(r), float(cos[k]))
    return DissipativityScan(w.ell, best, worst, best >= 0.75)


def ell_search(M: float, candidates: Iterable[float] = tuple(2.0 ** np.arange(-3, 8)),
               c: float = SOUND_SPEED, **scan_kw) -> float:
    """Smallest candidate ℓ for which the 3/4 dissipativity margin holds on the scan grid."""
    speeds = scan_kw.pop("speeds", tuple(np.linspace(0, 50, 101)))
    table = {s: collision_frequency((s, 0.0, 0.0)) for s in speeds}
    for ell in sorted(candidates):
        res = dissipativity_scan(SpaceLikeWeight(M, ell, c), speeds=speeds, nu=table.__getitem__,
                                 **scan_kw)
        if res.passed:
            return float(ell)
    raise ValueError("no candidate ell satisfies the dissipativity margin")


# -- Gaussian damping -------------------------------------------------------
def gaussian_damping_max(kappa: float = 0.2, speeds=None, times=None) -> tuple[float, tuple[float, float]]:
    """max of e^{κρ(ξ,t)} M(ξ)^{1/2} over a speed-time grid and its location."""
    speeds = np.linspace(0.0, 20.0, 2001) if speeds is None else np.asarray(speeds, float)
    times = np.concatenate([np.linspace(0, 30, 301), [50.0, 100.0, 1e3, 1e6]]) if times is None \
        else np.asarray(times, float)
    S, T = np.meshgrid(speeds, times, indexing="ij")
    log_v = kappa * rho_bar(S, T) - 0.75 * math.log(2 * math.pi) - 0.25 * S * S
    k = int(np.argmax(log_v))
    return float(math.exp(log_v.flat[k])), (float(S.flat[k]), float(T.flat[k]))


def semigroup_damping_check(nu0: float, kappa: float, speeds=None, times=None,
                            rtol: float = 1e-12) -> tuple[int, float]:
    """Count of (ξ, τ, t) violating e^{-ν(t-τ)} e^{κρ(t)} ≤ e^{-(ν0-κ)⟨ξ⟩(t-τ)} e^{κρ(τ)}.

    Returns (violations, smallest log-margin).
    """
    speeds = np.linspace(0.0, 30.0, 61) if speeds is None else np.asarray(speeds, float)
    times = np.linspace(0.0, 40.0, 81) if times is None else np.asarray(times, float)
    viol, best = 0, math.inf
    Tau, T = np.meshgrid(times, times, indexing="ij")
    keep = Tau <= T
    Tau, T = Tau[keep], T[keep]
    for s in speeds:
        nv = collision_frequency((s, 0.0, 0.0))
        b = math.hypot(1.0, s)
        lhs = -nv * (T - Tau) + kappa * rho_bar(s, T)
        rhs = -(nu0 - kappa) * b * (T - Tau) + kappa * rho_bar(s, Tau)
        margin = rhs - lhs
        viol += int(np.count_nonzero(margin < -rtol * (1 + np.abs(lhs))))
        best = min(best, float(margin.min()))
    return viol, best


# -- weighted kernel integrals ---------------------------------------------
def weighted_kernel_check(beta: float, kappa: float, samples, mc: QuadratureSpec | None = None,
                          max_rel_stderr: float = 0.05) -> KernelReport:
    """Weighted gain integrals (both forms summed) divided by ν(ξ) at each (ξ, t)."""
    mc = mc or QuadratureSpec()
    if beta <= 4:
        raise ValueError("beta must exceed 4")
    if not 0 < kappa < 0.25:
        raise ValueError("kappa must lie in (0, 1/4)")
    if mc.mc_samples < 100_000:
        raise ValueError("kernel checks need at least 1e5 samples per point")
    out = []
    for i, (xi, t) in enumerate(samples):
        xi = as_velocity(xi)
        v1, e1 = kernel_integral_mc(xi, beta, "weighted_gain_gain", mc.mc_samples,
                                    mc.seed + 2 * i, kappa, t)
        v2, e2 = kernel_integral_mc(xi, beta, "weighted_gain_gauss", mc.mc_samples,
                                    mc.seed + 2 * i + 1, kappa, t)
        val, err = v1 + v2, math.hypot(e1, e2)
        nv = collision_frequency(xi)
        bad = not (math.isfinite(val) and math.isfinite(err)) or err > max_rel_stderr * val
        out.append(KernelSample(tuple(float(c) for c in xi), float(np.linalg.norm(xi)), val, err,
                                nv, val / nv, err / nv, bad, float(t)))
    good = [s for s in out if not s.inconclusive]
    sup = max((s.ratio for s in good), default=math.nan)
    trend = _trend([s.speed for s in good], [s.ratio for s in good])
    damp, _ = gaussian_damping_max(kappa)
    return KernelReport(beta, out, sup, trend,
                        {"kappa": kappa, "mc_samples": mc.mc_samples, "gaussian_damping_max": damp})
