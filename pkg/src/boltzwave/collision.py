"""Hard-sphere collision geometry, collision frequency and the fluid modes.

The gain-kernel integrals are sampled in the orthogonal parametrization
ξ' = ξ + η, ξ∗' = ξ + ω with ω ⊥ η, in which

    ∫∫ |(ξ-ξ∗)·n| F(ξ', ξ∗') dn dξ∗ = 2 ∫ dη/|η| ∫_{ω⊥η} F(ξ+η, ξ+ω) dω .
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .quadrature import QuadratureError, QuadratureSpec, chunk_sizes, maxwellian_cubature, rng_stream

SOUND_SPEED = math.sqrt(5.0 / 3.0)
_UNIT_TOL = 1e-12
_RENORM_TOL = 1e-6


def as_velocity(xi) -> np.ndarray:
    v = np.asarray(xi, dtype=float)
    if v.shape[-1] != 3:
        raise ValueError("velocity must have three components")
    if not np.all(np.isfinite(v)):
        raise ValueError("velocity components must be finite")
    return v


def bracket(xi) -> np.ndarray:
    """⟨ξ⟩ = (1 + |ξ|²)^{1/2}."""
    v = np.asarray(xi, dtype=float)
    return np.hypot(1.0, np.linalg.norm(v, axis=-1))


def maxwellian(xi):
    """Global Maxwellian (2π)^{-3/2} exp(-|ξ|²/2)."""
    v = as_velocity(xi)
    out = (2 * math.pi) ** -1.5 * np.exp(-0.5 * np.sum(v * v, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class CollisionOutcome:
    xi_prime: np.ndarray
    xi_star_prime: np.ndarray


def _unit(n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    dev = np.abs(norm - 1.0)
    if np.any(dev > _RENORM_TOL):
        raise ValueError("collision direction n must be a unit vector")
    return np.where(dev > _UNIT_TOL, n / norm, n)


def post_collision(xi, xi_star, n) -> CollisionOutcome:
    """ξ' = ξ - [(ξ-ξ∗)·n]n and ξ∗' = ξ∗ + [(ξ-ξ∗)·n]n; accepts batches."""
    xi = as_velocity(xi)
    xs = as_velocity(xi_star)
    n = _unit(n)
    proj = np.sum((xi - xs) * n, axis=-1, keepdims=True) * n
    return CollisionOutcome(xi - proj, xs + proj)


# -- collision frequency ----------------------------------------------------
def _shell_mean(v: float, r):
    """Average of |ξ-ξ∗| over directions of ξ∗ at |ξ∗| = r, |ξ| = v."""
    r = np.asarray(r, dtype=float)
    if v == 0.0:
        return r
    return ((v + r) ** 3 - np.abs(v - r) ** 3) / (6.0 * v * r)


def collision_frequency(xi, quad: QuadratureSpec | None = None, strict: bool = True) -> float:
    """ν(ξ) = ∫∫ |(ξ-ξ∗)·n| M(ξ∗) dn dξ∗ by a one-dimensional radial integral.

    The sphere average of |q·n| is |q|/2, so ν = 2π E|ξ - ξ∗|; averaging over
    directions of ξ∗ leaves an integral in r = |ξ∗| against the radial
    Maxwellian density √(2/π) r² e^{-r²/2}.
    """
    quad = quad or QuadratureSpec()
    v = float(np.linalg.norm(as_velocity(xi)))
    dens = math.sqrt(2.0 / math.pi)

    def integrand(r):
        return _shell_mean(v, r) * dens * r * r * math.exp(-0.5 * r * r)

    eps = dict(epsabs=1e-14, epsrel=min(quad.rel_tol, 1e-11), limit=200)
    tot, err = 0.0, 0.0
    for lo, hi in ((0.0, v), (v, v + 12.0), (v + 12.0, np.inf)):
        if hi > lo:
            val, e = integrate.quad(integrand, lo, hi, **eps)
            tot += val
            err += e
    nu = 2 * math.pi * tot
    err *= 2 * math.pi
    if strict and err > max(quad.abs_tol, quad.rel_tol * nu):
        raise QuadratureError("collision frequency quadrature did not converge", nu, err)
    return nu


def collision_frequency_mc(xi, n_samples: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Direct sampling of ξ∗ ~ M and n uniform on the sphere; (estimate, stderr)."""
    v = as_velocity(xi)
    s1 = s2 = 0.0
    sizes = chunk_sizes(n_samples)
    for n, rng in zip(sizes, rng_stream(seed, len(sizes))):
        xs = rng.standard_normal((n, 3))
        nn = rng.standard_normal((n, 3))
        nn /= np.linalg.norm(nn, axis=1)[:, None]
        val = 4 * math.pi * np.abs(np.sum((v - xs) * nn, axis=1))
        s1 += val.sum()
        s2 += (val * val).sum()
    mean = s1 / n_samples
    return mean, math.sqrt(max(s2 / n_samples - mean * mean, 0.0) / n_samples)


@dataclass(frozen=True)
class NuEnvelope:
    nu0: float
    nu1: float
    grid: tuple[float, ...] = ()

    def __post_init__(self):
        if not (0 < self.nu0 <= self.nu1):
            raise ValueError("envelope requires 0 < nu0 <= nu1")

    def contains(self, speed: float, nu: float, rtol: float = 1e-12) -> bool:
        b = math.hypot(1.0, speed)
        return self.nu0 * b * (1 - rtol) <= nu <= self.nu1 * b * (1 + rtol)


def nu_envelope(grid: Sequence[float], quad: QuadratureSpec | None = None) -> NuEnvelope:
    """inf and sup of ν(ξ)/⟨ξ⟩ over the speeds in ``grid``."""
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("grid must be non-empty")
    if min(grid) < 0:
        raise ValueError("speeds must be nonnegative")
    ratios = [collision_frequency((s, 0.0, 0.0), quad) / math.hypot(1.0, s) for s in grid]
    return NuEnvelope(min(ratios), max(ratios), tuple(grid))


# -- gain-kernel integrals --------------------------------------------------
@dataclass
class KernelSample:
    xi: tuple[float, float, float]
    speed: float
    value: float
    stderr: float
    nu: float
    ratio: float
    ratio_stderr: float
    inconclusive: bool
    t: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class KernelReport:
    """Per-velocity ratios of a kernel integral to ν(ξ), with summary constants."""

    beta: float
    samples: list[KernelSample]
    empirical_sup: float
    trend_slope: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "empirical_sup": self.empirical_sup,
                "trend_slope": self.trend_slope, "meta": self.meta,
                "samples": [s.to_dict() for s in self.samples]}


def _log_bracket(v):
    return 0.5 * np.log1p(np.sum(v * v, axis=-1))


def _rho(v, t):
    b = np.hypot(1.0, np.linalg.norm(v, axis=-1))
    return b * np.minimum(b, t)


def _orth_basis(u):
    """Two unit vectors spanning the plane orthogonal to each row of u."""
    u = u / np.linalg.norm(u, axis=1)[:, None]
    helper = np.where(np.abs(u[:, [0]]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = np.cross(u, helper)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(u, e1)
    return e1, e2


class _EtaProposal:
    """Mixture proposal for η tuned to the ridges of the kernel integrands."""

    def __init__(self, xi: np.ndarray, beta: float):
        self.xi = xi
        sp = float(np.linalg.norm(xi))
        self.speed = sp
        self.axis = xi / sp if sp > 0 else np.array([0.0, 0.0, 1.0])
        self.b1, self.b2 = _orth_basis(self.axis[None, :])
        self.b1, self.b2 = self.b1[0], self.b2[0]
        self.br = math.hypot(1.0, sp)
        # (kind, center, scale)
        self.parts = [
            ("t3", -xi, math.sqrt(2.0)),
            ("t3", -xi, max(2.0 / math.sqrt(beta), 0.05)),
            ("disk", None, self.br / math.sqrt(beta) + 1.0),
            ("ball", None, 1.0),
            ("t3", np.zeros(3), self.br),
        ]

    @staticmethod
    def _t3_logpdf(d, s):
        # 3D Student t with 3 degrees of freedom
        from scipy.special import gammaln
        nu = 3.0
        r2 = np.sum(d * d, axis=1) / (s * s)
        return (gammaln((nu + 3) / 2) - gammaln(nu / 2) - 1.5 * math.log(nu * math.pi)
                - 3 * math.log(s) - (nu + 3) / 2 * np.log1p(r2 / nu))

    def sample(self, rng, n):
        k = len(self.parts)
        pick = rng.integers(0, k, n)
        out = np.empty((n, 3))
        for i, (kind, cen, s) in enumerate(self.parts):
            sel = pick == i
            m = int(sel.sum())
            if not m:
                continue
            if kind == "t3":
                z = rng.standard_normal((m, 3))
                w = rng.chisquare(3.0, m)
                out[sel] = cen + s * z / np.sqrt(w / 3.0)[:, None]
            elif kind == "ball":
                d = rng.standard_normal((m, 3))
                d /= np.linalg.norm(d, axis=1)[:, None]
                out[sel] = d * (s * rng.random(m))[:, None]
            else:
                p = rng.standard_normal((m, 2)) / np.sqrt(rng.chisquare(3.0, m) / 3.0)[:, None] * s
                rho = np.linalg.norm(p, axis=1)
                h = (rho + 1.0) / max(self.speed, 1.0)
                par = h * rng.standard_cauchy(m)
                out[sel] = p[:, :1] * self.b1 + p[:, 1:] * self.b2 + par[:, None] * self.axis
        return out

    def pdf(self, eta):
        k = len(self.parts)
        tot = np.zeros(eta.shape[0])
        for kind, cen, s in self.parts:
            if kind == "t3":
                tot += np.exp(self._t3_logpdf(eta - cen, s))
            elif kind == "ball":
                r = np.linalg.norm(eta, axis=1)
                tot += np.where(r < s, 1.0 / (4 * math.pi * np.maximum(r, 1e-300) ** 2 * s), 0.0)
            else:
                par = eta @ self.axis
                p1 = eta @ self.b1
                p2 = eta @ self.b2
                rho2 = p1 * p1 + p2 * p2
                # bivariate t, 3 degrees of freedom, scale s
                p2d = (1.0 / (2 * math.pi * s * s)) * (1 + rho2 / (3 * s * s)) ** (-2.5)
                h = (np.sqrt(rho2) + 1.0) / max(self.speed, 1.0)
                tot += p2d / (math.pi * h * (1 + (par / h) ** 2))
        return tot / k


KERNEL_FORMS = ("gain_loss_gauss", "gain_gain", "weighted_gain_gain", "weighted_gain_gauss")


def kernel_integral_mc(xi, beta: float, form: str, n_samples: int = 100_000, seed: int = 0,
                       kappa: float = 0.0, t: float = 0.0) -> tuple[float, float]:
    """Monte-Carlo estimate of one gain-kernel integral at velocity ξ.

    Forms (ξ' = ξ+η, ξ∗' = ξ+ω, q = ξ-ξ∗)::

        gain_loss_gauss      ∫∫ |q|     ⟨ξ⟩^β ⟨ξ∗'⟩^-β e^{-|ξ'|²/4}
        gain_gain            ∫∫ |q|     ⟨ξ⟩^β ⟨ξ'⟩^-β ⟨ξ∗'⟩^-β
        weighted_gain_gain   ∫∫ |q·n|   ⟨ξ⟩^β ⟨ξ'⟩^-β ⟨ξ∗'⟩^-β e^{κ[ρ(ξ)-ρ(ξ')-ρ(ξ∗')]}
        weighted_gain_gauss  ∫∫ |q·n|   ⟨ξ⟩^β ⟨ξ∗'⟩^-β e^{-|ξ'|²/4} e^{κ[ρ(ξ)-ρ(ξ')-ρ(ξ∗')]}

    ω is drawn exactly from the bivariate t law proportional to ⟨ξ+ω⟩^-β
    in the plane η⊥, η from a ridge-adapted mixture.
    """
    if form not in KERNEL_FORMS:
        raise ValueError(f"unknown kernel form {form!r}")
    if beta <= 4:
        raise ValueError("beta must exceed 4")
    xi = as_velocity(xi).astype(float)
    prop = _EtaProposal(xi, beta)
    lb_xi = float(_log_bracket(xi))
    rho_xi = float(_rho(xi[None, :], t)[0]) if kappa else 0.0
    s1 = s2 = 0.0
    sizes = chunk_sizes(n_samples, 100_000)
    with np.errstate(over="ignore", invalid="ignore"):
        for n, rng in zip(sizes, rng_stream(seed, len(sizes))):
            v1, v2 = _kernel_chunk(rng, n, xi, beta, form, prop, lb_xi, rho_xi, kappa, t)
            s1 += v1
            s2 += v2
    mean = s1 / n_samples
    if not math.isfinite(mean):
        return math.inf, math.inf
    return mean, math.sqrt(max(s2 / n_samples - mean * mean, 0.0) / n_samples)


def _kernel_chunk(rng, n, xi, beta, form, prop, lb_xi, rho_xi, kappa, t):
    nu_df = beta - 2.0
    eta = prop.sample(rng, n)
    q_eta = prop.pdf(eta)
    ne = np.linalg.norm(eta, axis=1)
    ne = np.maximum(ne, 1e-300)
    e1, e2 = _orth_basis(eta)
    par = (xi @ eta.T) / ne                       # ξ·η̂
    a2 = 1.0 + par * par
    # ω = -proj(ξ) + w ; w bivariate t with df β-2 and scale a/√(β-2)
    proj_xi = xi[None, :] - par[:, None] * eta / ne[:, None]
    z = rng.standard_normal((n, 2))
    chi = rng.chisquare(nu_df, n)
    w = z * np.sqrt(a2 / chi)[:, None]
    omega = -proj_xi + w[:, :1] * e1 + w[:, 1:] * e2
    # ∫ ⟨ξ+ω⟩^-β dω over the plane = 2π a^{2-β}/(β-2)
    log_plane = math.log(2 * math.pi / nu_df) + (1 - beta / 2) * np.log(a2)
    xp = xi + eta
    log_f = beta * lb_xi + log_plane
    if form in ("gain_loss_gauss", "weighted_gain_gauss"):
        log_f = log_f - 0.25 * np.sum(xp * xp, axis=1)
    else:
        log_f = log_f - beta * _log_bracket(xp)
    if form.startswith("weighted") and kappa:
        log_f = log_f + kappa * (rho_xi - _rho(xp, t) - _rho(xi + omega, t))
    kern = 2.0 / ne
    if form in ("gain_loss_gauss", "gain_gain"):
        kern = kern * np.sqrt(ne * ne + np.sum(omega * omega, axis=1)) / ne
    val = kern * np.exp(log_f) / q_eta
    return float(val.sum()), float((val * val).sum())


def _trend(speeds, ratios) -> float:
    sp = np.asarray(speeds, float)
    ra = np.asarray(ratios, float)
    ok = (sp >= np.median(sp)) & (ra > 0)
    if ok.sum() < 2 or np.ptp(sp[ok]) == 0:
        return 0.0
    A = np.vstack([np.log(np.hypot(1.0, sp[ok])), np.ones(ok.sum())]).T
    return float(np.linalg.lstsq(A, np.log(ra[ok]), rcond=None)[0][0])


def k_weighted_bound_check(beta: float, R: float, xi_samples, mc: QuadratureSpec | None = None,
                           max_rel_stderr: float = 0.05) -> KernelReport:
    """Ratio of the two weighted gain integrals to ν(ξ) at each sampled ξ.

    The summed integrals gain_loss_gauss + gain_gain are divided by ν(ξ).
    Samples whose relative standard error exceeds ``max_rel_stderr`` are
    flagged inconclusive.  The report's sup runs over |ξ| ≥ R, falling back
    to all samples when none qualify.
    """
    mc = mc or QuadratureSpec()
    if beta <= 4:
        raise ValueError("beta must exceed 4")
    if mc.mc_samples < 100_000:
        raise ValueError("kernel checks need at least 1e5 samples per velocity")
    out = []
    for i, xi in enumerate(xi_samples):
        xi = as_velocity(xi)
        v1, e1 = kernel_integral_mc(xi, beta, "gain_loss_gauss", mc.mc_samples, mc.seed + 2 * i)
        v2, e2 = kernel_integral_mc(xi, beta, "gain_gain", mc.mc_samples, mc.seed + 2 * i + 1)
        val, err = v1 + v2, math.hypot(e1, e2)
        nu = collision_frequency(xi)
        bad = not (math.isfinite(val) and math.isfinite(err)) or err > max_rel_stderr * val
        out.append(KernelSample(tuple(float(c) for c in xi), float(np.linalg.norm(xi)), val, err,
                                nu, val / nu, err / nu, bad))
    good = [s for s in out if not s.inconclusive]
    far = [s for s in good if s.speed >= R] or good
    sup = max((s.ratio for s in far), default=math.nan)
    trend = _trend([s.speed for s in good], [s.ratio for s in good])
    return KernelReport(beta, out, sup, trend, {"R": R, "mc_samples": mc.mc_samples})


def empirical_eta_constants(report: KernelReport, R: float | None = None) -> tuple[float, float]:
    """(C, C_β) with ratio + 3σ ≤ C/β + C_β/(1+|ξ|)² on conclusive samples with |ξ| ≥ R.

    C/β is the smallest such bound (the large-|ξ| plateau); C_β is the
    least value that covers the remaining samples.
    """
    R = report.meta.get("R", 0.0) if R is None else R
    good = [s for s in report.samples if not s.inconclusive and s.speed >= R]
    if not good:
        raise ValueError("no conclusive samples with |xi| >= R")
    base = min(s.ratio + 3 * s.ratio_stderr for s in good)
    C = report.beta * base
    Cb = max(max((s.ratio + 3 * s.ratio_stderr - base) * (1 + s.speed) ** 2 for s in good), 0.0)
    return C, Cb


def kernel_zero_velocity_oracle(beta: float) -> float:
    """Closed form of the |q·n|-kernel gain_gain integral at ξ = 0: 16π²/(β-2)²."""
    return 16 * math.pi ** 2 / (beta - 2) ** 2


# -- fluid modes ------------------------------------------------------------
def _basis_polys(nodes: np.ndarray) -> np.ndarray:
    """χ_i / M^{1/2} at the nodes, shape (5, N)."""
    x = nodes
    r2 = np.sum(x * x, axis=1)
    return np.stack([np.ones(len(x)), x[:, 0], x[:, 1], x[:, 2], (r2 - 3.0) / math.sqrt(6.0)])


def macro_gram(quad_order: int = 12) -> np.ndarray:
    nodes, w = maxwellian_cubature(quad_order)
    P = _basis_polys(nodes)
    return (P * w) @ P.T


def sound_wave_matrix(omega, quad_order: int = 12) -> np.ndarray:
    """Matrix of P0 (ξ·ω) P0 in the orthonormal fluid basis {χ0..χ4}."""
    om = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(om) - 1.0) > 1e-10:
        raise ValueError("omega must be a unit vector")
    nodes, w = maxwellian_cubature(quad_order)
    P = _basis_polys(nodes)
    return (P * (w * (nodes @ om))) @ P.T


def sound_wave_eigensystem(omega, quad: QuadratureSpec | None = None, quad_order: int = 12):
    """Eigenvalues (descending) and coefficient vectors of P0(ξ·ω)P0.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as rows.
    """
    A = sound_wave_matrix(omega, quad_order)
    check = sound_wave_matrix(omega, quad_order + 4)
    if np.max(np.abs(A - check)) > 1e-10:
        raise QuadratureError("fluid-mode cubature not converged", float(np.abs(A).max()),
                              float(np.max(np.abs(A - check))))
    vals, vecs = np.linalg.eigh(0.5 * (A + A.T))
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order].T


def sound_mode_vectors(omega) -> dict[str, np.ndarray]:
    """Closed-form coefficients of E0, E1, E2 in the χ basis."""
    om = np.asarray(omega, dtype=float)
    e0 = np.concatenate([[math.sqrt(0.3)], math.sqrt(0.5) * om, [math.sqrt(0.2)]])
    e1 = np.concatenate([[math.sqrt(0.3)], -math.sqrt(0.5) * om, [math.sqrt(0.2)]])
    e2 = np.array([-math.sqrt(0.4), 0.0, 0.0, 0.0, math.sqrt(0.6)])
    return {"E0": e0, "E1": e1, "E2": e2}


def loss_integral(speed: float, beta: float) -> float:
    """∫∫ |q·n| ⟨ξ∗⟩^-β dn dξ∗ = 2π ∫ |ξ-ξ∗| ⟨ξ∗⟩^-β dξ∗, reduced to one radial integral."""
    if beta <= 4:
        raise ValueError("beta must exceed 4")
    v = float(speed)

    def f(r):
        return 4 * math.pi * r * r * (1 + r * r) ** (-beta / 2) * float(_shell_mean(v, r))

    # the weight is concentrated on |ξ∗| ≲ 1/√β; break there and at the kink r = v
    w = 1.0 / math.sqrt(beta)
    edges = sorted({0.0, v} | {k * w for k in (1, 4, 16, 64)} | {v + k * w for k in (4, 64)})
    tot = 0.0
    for lo, hi in zip(edges, edges[1:] + [np.inf]):
        if hi > lo:
            tot += integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)[0]
    return 2 * math.pi * tot


def bilinear_constant(beta: float, speeds: Sequence[float], mc: QuadratureSpec | None = None,
                      kappa: float = 0.0, times: Sequence[float] = (0.0,)) -> tuple[float, list[dict]]:
    """Empirical sup over ξ (and t) of [gain + loss]/ν(ξ) for the weighted bilinear operator.

    The gain part is the |q·n| kernel with both outgoing weights; the loss
    part is bounded by its unweighted form since e^{-κρ} ≤ 1.
    """
    mc = mc or QuadratureSpec()
    rows, best = [], 0.0
    k = 0
    for s in speeds:
        nu = collision_frequency((s, 0.0, 0.0))
        loss = loss_integral(s, beta)
        for t in times:
            g, e = kernel_integral_mc((s, 0.0, 0.0), beta, "weighted_gain_gain", mc.mc_samples,
                                      mc.seed + k, kappa, t)
            k += 1
            r = (g + 3 * e + loss) / nu
            rows.append({"speed": float(s), "t": float(t), "gain": g, "gain_stderr": e,
                         "loss": loss, "nu": nu, "ratio": r})
            best = max(best, r)
    return best, rows
