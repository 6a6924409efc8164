"""Damped free transport and the decay of its Duhamel integrals against
wave-pattern sources."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from .collision import as_velocity, collision_frequency
from .quadrature import QuadratureError, QuadratureSpec, adaptive_batch
from .wave_patterns import SOUND_SPEED, Region, classify_region, region_interval

FORMS = ("Exponential", "Stationary", "Moving")


def damped_semigroup(g0: Callable, t: float, x, xi, nu: float | None = None):
    """e^{-ν(ξ)t} g0(x - ξt, ξ)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = np.asarray(x, dtype=float)
    xi = as_velocity(xi)
    nu = collision_frequency(xi) if nu is None else nu
    return math.exp(-nu * t) * g0(x - xi * t, xi)


@dataclass(frozen=True)
class AnsatzSource:
    """Source bound |ν⁻¹V|_β ≤ amplitude × template(τ, |y|)."""

    form: str
    alpha: float = 0.0
    rho: float = 0.0
    c_rate: float = 1.0
    c: float = SOUND_SPEED
    amplitude: float = 1.0
    velocity_weight_beta: float = 8.0

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}")
        if self.form != "Exponential" and (self.alpha <= 0 or self.rho <= 0):
            raise ValueError("alpha and rho must be positive")
        if self.c_rate <= 0 or self.c <= 0 or self.amplitude < 0:
            raise ValueError("rates must be positive and amplitude nonnegative")

    def log_profile(self, tau, s):
        tau = np.asarray(tau, float)
        s = np.asarray(s, float)
        la = math.log(self.amplitude) if self.amplitude > 0 else -math.inf
        if self.form == "Exponential":
            return la - (tau + s) / self.c_rate
        if self.form == "Stationary":
            d2 = s * s
        else:
            d2 = (s - self.c * tau) ** 2
        return la - self.alpha * np.log1p(tau) - self.rho * np.log1p(d2 / (1 + tau))

    def __call__(self, tau, s):
        return np.exp(self.log_profile(tau, s))

    def template(self, t, r):
        """The conclusion's right-hand profile without constant."""
        return self(t, r) / self.amplitude if self.amplitude > 0 else 0.0


@dataclass
class GainResult:
    value: float
    error: float
    converged: bool


def _tau_points(t: float, nu: float) -> list[float]:
    pts = sorted({max(t - k / nu, 0.0) for k in (1, 4, 16, 64)} | {t / 2})
    return [p for p in pts if 0 < p < t]


_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def radial_sup_batch(logf: Callable[[np.ndarray, np.ndarray], np.ndarray], tau: np.ndarray,
                     hi: np.ndarray, n_scan: int = 65, iters: int = 60) -> np.ndarray:
    """Row-wise max over s ∈ [0, hi] of logf(τ, s), vectorized over τ.

    A coarse scan locates the best grid cell; golden-section search then
    refines inside the bracketing cells.
    """
    u = np.linspace(0.0, 1.0, n_scan)
    S = hi[:, None] * u[None, :]
    T = np.broadcast_to(tau[:, None], S.shape)
    vals = logf(T, S)
    k = np.argmax(vals, axis=1)
    best = vals[np.arange(len(tau)), k]
    a = hi * u[np.maximum(k - 1, 0)]
    b = hi * u[np.minimum(k + 1, n_scan - 1)]
    x1 = b - _GOLD * (b - a)
    x2 = a + _GOLD * (b - a)
    f1, f2 = logf(tau, x1), logf(tau, x2)
    for _ in range(iters):
        left = f1 >= f2
        a = np.where(left, a, x1)
        b = np.where(left, x2, b)
        keep_x, keep_f = np.where(left, x1, x2), np.where(left, f1, f2)
        new_x = np.where(left, b - _GOLD * (b - a), a + _GOLD * (b - a))
        new_f = logf(tau, new_x)
        x1, f1 = np.where(left, new_x, keep_x), np.where(left, new_f, keep_f)
        x2, f2 = np.where(left, keep_x, new_x), np.where(left, keep_f, new_f)
    return np.maximum(best, np.maximum(f1, f2))


def sup_y_log(V: AnsatzSource, tau, r: float, nu0: float) -> np.ndarray:
    """log sup_y e^{-ν0|x-y|/2} V(τ,|y|) for |x| = r, vectorized over τ."""
    tau = np.atleast_1d(np.asarray(tau, float))
    if V.form == "Exponential" and nu0 / 2 > 1 / V.c_rate:
        # the source decays slower than the kernel: maximum at s = r
        return V.log_profile(tau, r)
    hi = np.maximum(r, V.c * tau if V.form == "Moving" else np.zeros_like(tau)) + 1e-12
    return radial_sup_batch(lambda T, S: -0.5 * nu0 * np.abs(r - S) + V.log_profile(T, S),
                            tau, hi)


def gain_decay_majorant(V: AnsatzSource, t: float, r: float, xi, nu0: float,
                        quad: QuadratureSpec | None = None, nu: float | None = None) -> GainResult:
    """∫₀ᵗ e^{-ν(t-τ)/2} ν sup_y e^{-ν0(t-τ+|x-y|)/2} V(τ,|y|) dτ."""
    quad = quad or QuadratureSpec()
    if t < 0 or r < 0:
        raise ValueError("t and r must be nonnegative")
    if t == 0 or V.amplitude == 0:
        return GainResult(0.0, 0.0, True)
    nu = collision_frequency(xi) if nu is None else nu

    def f(x, _owner):
        flat = x.ravel()
        v = np.log(nu) - 0.5 * (nu + nu0) * (t - flat) + sup_y_log(V, flat, r, nu0)
        return np.exp(v).reshape(x.shape)

    bp = np.array([0.0] + _tau_points(t, nu) + [t])
    res = adaptive_batch(f, [bp], quad.rel_tol, quad.abs_tol, quad.max_subdivisions)
    return GainResult(float(res.value[0]), float(res.error[0]), bool(res.converged[0]))


def gain_decay_integral(V: AnsatzSource, t: float, x, xi, quad: QuadratureSpec | None = None,
                        nu: float | None = None) -> GainResult:
    """Exact Duhamel integral ∫₀ᵗ e^{-ν(t-τ)} ν V(τ, |x - ξ(t-τ)|) dτ."""
    quad = quad or QuadratureSpec()
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = np.array([float(x), 0.0, 0.0])
    xi = as_velocity(xi)
    if t == 0 or V.amplitude == 0:
        return GainResult(0.0, 0.0, True)
    nu = collision_frequency(xi) if nu is None else nu

    def f(tau):
        y = x - xi * (t - tau)
        return nu * math.exp(-nu * (t - tau)) * float(V(tau, np.linalg.norm(y)))

    val, err = integrate.quad(f, 0.0, t, points=_tau_points(t, nu), epsabs=0.0,
                              epsrel=quad.rel_tol, limit=quad.max_subdivisions)
    return GainResult(val, err, err <= max(quad.rel_tol * abs(val), quad.abs_tol) * 10)


def exponential_gain_check(A: float, B: float, c_rate: float, eta: float, t: float,
                           x_radius: float, xi, nu0: float, quad: QuadratureSpec | None = None,
                           nu: float | None = None) -> float:
    """Majorant for an exponential source of size A + ηB over 2(A+ηB)e^{-(t+|x|)/c}."""
    if not nu0 / 2 > 1 / c_rate:
        raise ValueError("hypothesis nu0/2 > 1/c violated")
    if min(A, B, eta) < 0 or A + eta * B <= 0:
        raise ValueError("A, B, eta must be nonnegative with A + eta*B > 0")
    amp = A + eta * B
    V = AnsatzSource("Exponential", c_rate=c_rate, amplitude=amp)
    res = gain_decay_majorant(V, t, x_radius, xi, nu0, quad, nu)
    if not res.converged:
        raise QuadratureError("exponential gain majorant did not converge", res.value, res.error)
    return res.value / (2 * amp * math.exp(-(t + x_radius) / c_rate))


# -- grids and ratio scans --------------------------------------------------
TRANSPORT_TIMES = (0.5, 2.0, 5.0, 10.0, 20.0, 35.0, 50.0, 70.0, 100.0)
TRANSPORT_SPEEDS = (0.0, 1.0, 3.0, 10.0, 30.0)


def region_grid(times=TRANSPORT_TIMES, c: float = SOUND_SPEED, n_random: int = 0,
                seed: int = 0, t_max: float = 100.0) -> list[tuple[float, float]]:
    """Region-stratified (r, t) points plus optional scrambled-Sobol fill."""
    pts = []
    for t in times:
        for reg in Region:
            lo, hi = region_interval(reg, t, c)
            if hi < lo:
                continue
            for frac in (0.0, 0.5, 1.0):
                r = lo + frac * (hi - lo)
                if classify_region(r, t, c) is reg:
                    pts.append((float(r), float(t)))
    if n_random:
        u = qmc.Sobol(2, scramble=True, seed=seed).random(n_random)
        ts = 0.5 + u[:, 1] * (t_max - 0.5)
        rs = u[:, 0] * (c * ts + 4 * np.sqrt(1 + ts))
        pts += [(float(r), float(t)) for r, t in zip(rs, ts)]
    return sorted(set(pts), key=lambda p: (p[1], p[0]))


@dataclass
class GainSample:
    r: float
    t: float
    speed: float
    region: str
    value: float
    template: float
    ratio: float
    converged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class GainReport:
    form: str
    params: dict
    samples: list[GainSample]
    empirical_sup: float
    stability: float
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (math.isfinite(self.empirical_sup) and self.stability <= 2.0
                and all(s.converged for s in self.samples))

    def to_dict(self) -> dict:
        return {"form": self.form, "params": self.params, "empirical_sup": self.empirical_sup,
                "stability": self.stability, "passed": self.passed, "meta": self.meta,
                "samples": [s.to_dict() for s in self.samples]}


def _stability(samples: list[GainSample], early: float, late: float) -> float:
    e = [s.ratio for s in samples if s.t == early]
    l = [s.ratio for s in samples if s.t == late]
    if not e or not l:
        return math.nan
    return max(l) / max(e)


def gain_ratio_scan(V: AnsatzSource, nu0: float, grid=None, speeds=TRANSPORT_SPEEDS,
                    quad: QuadratureSpec | None = None, early: float = 10.0,
                    late: float = 100.0) -> GainReport:
    """Majorant over the lemma's template on (r, t, |ξ|) samples.

    Stability is the sup ratio at t = ``late`` over the sup at t = ``early``.
    """
    grid = region_grid(c=V.c) if grid is None else grid
    nus = {s: collision_frequency((s, 0.0, 0.0)) for s in speeds}
    out = []
    for r, t in grid:
        tmpl = float(V.template(t, r))
        for s in speeds:
            res = gain_decay_majorant(V, t, r, (s, 0.0, 0.0), nu0, quad, nus[s])
            out.append(GainSample(r, t, s, classify_region(r, t, V.c).value, res.value, tmpl,
                                  res.value / (V.amplitude * tmpl), res.converged))
    sup = max((x.ratio for x in out if x.converged), default=math.nan)
    return GainReport(V.form, {"alpha": V.alpha, "rho": V.rho, "c_rate": V.c_rate, "c": V.c},
                      out, sup, _stability(out, early, late), {"nu0": nu0})


def exponential_ratio_scan(nu0: float, c_rate: float | None = None, A: float = 1.0,
                           B: float = 0.0, eta: float = 0.0,
                           times: Sequence[float] = tuple(np.linspace(0, 50, 26)),
                           radii: Sequence[float] = (0.0, 1.0, 5.0, 20.0, 60.0),
                           speeds=TRANSPORT_SPEEDS, quad=None) -> GainReport:
    """Exponential-source ratios; the bound holds when every ratio is ≤ 1."""
    c_rate = 4.0 / nu0 if c_rate is None else c_rate
    nus = {s: collision_frequency((s, 0.0, 0.0)) for s in speeds}
    out = []
    for t in times:
        for r in radii:
            for s in speeds:
                q = exponential_gain_check(A, B, c_rate, eta, float(t), float(r), (s, 0, 0),
                                           nu0, quad, nus[s])
                out.append(GainSample(float(r), float(t), s,
                                      classify_region(float(r), float(t), SOUND_SPEED).value,
                                      q * 2 * (A + eta * B) * math.exp(-(t + r) / c_rate),
                                      2 * (A + eta * B) * math.exp(-(t + r) / c_rate), q, True))
    sup = max(x.ratio for x in out)
    return GainReport("Exponential", {"c_rate": c_rate, "A": A, "B": B, "eta": eta}, out, sup,
                      math.nan, {"nu0": nu0})
