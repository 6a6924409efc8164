"""Constant closure of the bound iteration for the two-part decomposition.

With E = ε‖f₀‖, the induction claims
    |f₁ⁿ| ≤ 2 C₁ E e^{-ν₀(t+|x|)/2},
    |f₂,₁ⁿ| ≤ 𝔅 E × (linear bracket),   |f₂,₂ⁿ| ≤ 2𝔆 (𝔅E)² × (nonlinear bracket).
The constant-update maps below are read off the induction step; the
smallness conditions are checked as plain arithmetic.  The linear-chain
constant carries a factor e^{R²/4}, far outside double range for the R
needed to make η small, so all arithmetic runs in mpmath.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from typing import Sequence

import mpmath as mp

mp.mp.dps = 40

# sup of the common f₂ bracket (both terms equal 1 at the origin)
BRACKET_SUP = 2


def _mpf(x) -> mp.mpf:
    return x if isinstance(x, mp.mpf) else mp.mpf(str(x) if isinstance(x, str) else x)


def _out(x: mp.mpf):
    """JSON-friendly number: float when representable, else a decimal string."""
    f = float(x)
    if f != 0.0 and math.isfinite(f) and abs(mp.log10(abs(x))) < 300:
        return f
    return mp.nstr(x, 17)


@dataclass
class ClosureLedger:
    """Named constants of the closure argument.

    ``C`` is the universal constant shared by the bilinear, kernel and
    gain-decay bounds; ``C_eta`` and ``C_beta`` build η(β,R); ``Cpp`` is the
    weighted bilinear constant and ``kappa`` the velocity-time rate.
    """

    beta: float
    R: float
    C_eta: float
    C_beta: float
    nu0: float
    nu1: float
    C: float
    C1: float
    C2: float
    C3: float
    Cpp: float
    kappa: float
    eps: float = 0.0
    f0_norm: float = 1.0
    B: object = None
    Cfrak: object = None
    eta: object = None
    margin: float = 1.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for f in ("beta", "R", "C_eta", "C_beta", "nu0", "nu1", "C", "C1", "C2", "C3", "Cpp",
                  "kappa", "f0_norm", "margin"):
            v = _mpf(getattr(self, f))
            if not v > 0:
                raise ValueError(f"{f} must be positive")
            setattr(self, f, v)
        self.eps = _mpf(self.eps)
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.beta <= 4:
            raise ValueError("beta must exceed 4")
        if self.nu0 > self.nu1:
            raise ValueError("nu0 must not exceed nu1")
        if self.eta is None:
            self.eta = self.C_eta / self.beta + self.C_beta / self.R ** 2
        self.eta = _mpf(self.eta)
        if self.B is None:
            self.B = self.margin * 2 * self.C2 * self.C1 ** 2 * self.kappa_b
        if self.Cfrak is None:
            self.Cfrak = self.margin * max(8 * self.C ** 2,
                                           8 * self.C ** 3 * self.C3 * self.C1 * self.nu1 / self.nu0)
        self.B, self.Cfrak = _mpf(self.B), _mpf(self.Cfrak)
        if not (self.B > 0 and self.Cfrak > 0 and self.eta > 0):
            raise ValueError("B, Cfrak and eta must be positive")

    @property
    def kappa_b(self) -> mp.mpf:
        """(2π)^{3/4} e^{R²/4} (C ν₁ (1+R)/β + C_β): the bounded-part kernel factor."""
        return ((2 * mp.pi) ** mp.mpf(0.75) * mp.exp(self.R ** 2 / 4)
                * (self.C_eta * self.nu1 * (1 + self.R) / self.beta + self.C_beta))

    @property
    def E(self) -> mp.mpf:
        return self.eps * self.f0_norm

    def with_eps(self, eps) -> "ClosureLedger":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["eps"] = _mpf(eps)
        return ClosureLedger(**d)

    def with_f0_norm(self, f0) -> "ClosureLedger":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["f0_norm"] = _mpf(f0)
        return ClosureLedger(**d)

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = _out(v) if isinstance(v, mp.mpf) else v
        d["kappa_b"] = _out(self.kappa_b)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClosureLedger":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names - {"kappa_b", "schema"}
        if unknown:
            raise ValueError(f"unknown ledger fields: {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_json(self) -> str:
        return json.dumps({"schema": "boltzwave.closure-ledger/1", **self.to_dict()}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ClosureLedger":
        return cls.from_dict(json.loads(text))


@dataclass
class Condition:
    name: str
    lhs: mp.mpf
    rhs: mp.mpf
    strict: bool = True
    eps_dependent: bool = True

    @property
    def passed(self) -> bool:
        return bool(self.lhs < self.rhs) if self.strict else bool(self.lhs <= self.rhs)

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": _out(self.lhs), "rhs": _out(self.rhs),
                "pass": self.passed, "strict": self.strict}


@dataclass
class ClosureVerdict:
    conditions: list[Condition]
    eps_max: mp.mpf
    log10_eps_max: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failed(self) -> list[str]:
        return [c.name for c in self.conditions if not c.passed]

    def to_dict(self) -> dict:
        return {"schema": "boltzwave.closure-verdict/1", "passed": self.passed,
                "eps_max": _out(self.eps_max), "log10_eps_max": self.log10_eps_max,
                "conditions": [c.to_dict() for c in self.conditions]}


class ClosureHypothesisError(ValueError):
    pass


ETA_CONDITION = "η(β,R) < 1/8"


def conditions(L: ClosureLedger, E=None) -> list[Condition]:
    """Every smallness inequality, evaluated at E = ε‖f₀‖ (ledger value by default)."""
    E = L.E if E is None else _mpf(E)
    B, Cf, C, C1 = L.B, L.Cfrak, L.C, L.C1
    gap = L.nu0 - L.kappa
    Ct = 4 * L.Cpp * mp.e ** mp.mpf(0.25) * B * L.nu1
    S = BRACKET_SUP
    return [
        Condition(ETA_CONDITION, L.eta, mp.mpf(1) / 8, eps_dependent=False),
        Condition("B covers the linear chain: 2·C2·C1²·κ_b ≤ B",
                  2 * L.C2 * C1 ** 2 * L.kappa_b, B, strict=False, eps_dependent=False),
        Condition("Cfrak covers the transport part: 8C² ≤ Cfrak", 8 * C ** 2, Cf,
                  strict=False, eps_dependent=False),
        Condition("Cfrak covers the kernel part: 8C³·C3·C1·ν1/ν0 ≤ Cfrak",
                  8 * C ** 3 * L.C3 * C1 * L.nu1 / L.nu0, Cf, strict=False, eps_dependent=False),
        Condition("κ < min(1/4, ν0/2)", L.kappa, min(mp.mpf(1) / 4, L.nu0 / 2),
                  eps_dependent=False),
        Condition("weighted small-kernel part: ν1·η/(ν0-κ) ≤ 1/4", L.nu1 * L.eta / gap,
                  mp.mpf(1) / 4, strict=False, eps_dependent=False),
        Condition("nonlinear source, displayed: 2C·E·(4C1 + 2·Cfrak·B·(1 + B·E)) < 1/2",
                  2 * C * E * (4 * C1 + 2 * Cf * B * (1 + B * E)), mp.mpf(1) / 2),
        Condition("nonlinear source, induction-consistent: 2C·E·(4C1 + 4S·B·(1 + 2·Cfrak·B·E)) < 1/2",
                  2 * C * E * (4 * C1 + 4 * S * B * (1 + 2 * Cf * B * E)), mp.mpf(1) / 2),
        Condition("quadratic absorption: 2·Cfrak·B·E ≤ 1", 2 * Cf * B * E, mp.mpf(1),
                  strict=False),
        Condition("weighted mixed term: C̃·E/(ν0-κ) < 1/4", Ct * E / gap, mp.mpf(1) / 4),
        Condition("weighted quadratic term: (4C''ν1/(ν0-κ))²·E < 1",
                  (4 * L.Cpp * L.nu1 / gap) ** 2 * E, mp.mpf(1)),
    ]


def _all_pass(L: ClosureLedger, E) -> bool:
    return all(c.passed for c in conditions(L, E) if c.eps_dependent)


def check_closure(ledger: ClosureLedger, rel_tol: float = 1e-6) -> ClosureVerdict:
    """Evaluate the conditions at the ledger's ε and bisect for the largest admissible ε."""
    if not ledger.eta < mp.mpf(1) / 8:
        raise ClosureHypothesisError(
            f"hypothesis {ETA_CONDITION} fails: η = {mp.nstr(ledger.eta, 8)}")
    conds = conditions(ledger)
    structural = all(c.passed for c in conds if not c.eps_dependent)
    if not structural:
        return ClosureVerdict(conds, mp.mpf(0), -math.inf)
    # every ε-dependent lhs vanishes at E = 0 and increases with E: bisect on log E
    hi = mp.mpf(0)
    while _all_pass(ledger, mp.mpf(10) ** hi):
        hi += 10
    lo = hi - 10
    while not _all_pass(ledger, mp.mpf(10) ** lo):
        hi, lo = lo, 2 * lo - 10 if lo < 0 else lo - 10
    tol = mp.log10(1 + mp.mpf(rel_tol)) / 4
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if _all_pass(ledger, mp.mpf(10) ** mid):
            lo = mid
        else:
            hi = mid
    E_max = mp.mpf(10) ** lo
    eps_max = E_max / ledger.f0_norm
    return ClosureVerdict(conds, eps_max, float(mp.log10(eps_max)))


@dataclass
class IterationStep:
    n: int
    f1: mp.mpf
    f2_lin: mp.mpf
    f2_nonlin: mp.mpf

    def to_dict(self) -> dict:
        return {"n": self.n, "f1": _out(self.f1), "f2_lin": _out(self.f2_lin),
                "f2_nonlin": _out(self.f2_nonlin)}


@dataclass
class IterationReport:
    steps: list[IterationStep]
    bounds: tuple[mp.mpf, mp.mpf, mp.mpf]
    first_violation: int | None
    violated: str | None

    @property
    def bounded(self) -> bool:
        return self.first_violation is None

    def to_dict(self) -> dict:
        return {"bounds": [_out(b) for b in self.bounds], "bounded": self.bounded,
                "first_violation": self.first_violation, "violated": self.violated,
                "steps": [s.to_dict() for s in self.steps]}


COUPLINGS = ("displayed", "derived")


def bound_iteration_simulate(ledger: ClosureLedger, n_steps: int, keep: int | None = None,
                             rtol: float = 1e-12, coupling: str = "displayed") -> IterationReport:
    """Iterate the constant-update maps from the zero iterate.

    With F₁ⁿ = |f₁ⁿ|/(C₁E), f₂ coefficients bⁿ, cⁿ over E and F₂ⁿ = bⁿ + cⁿE:
        F₁ⁿ⁺¹ = 1 + 2η F₁ⁿ + 2C E F₁ⁿ (F₁ⁿ C₁ + Gⁿ)
        bⁿ⁺¹  = C₂ C₁² κ_b F₁ⁿ⁺¹
        cⁿ⁺¹  = 2C² (F₂ⁿ)² (1 + C C₃ C₁ ν₁/ν₀)
    The f₁-f₂ coupling Gⁿ is 𝔆bⁿ + cⁿE/2 for "displayed" (the source
    condition as the proof states it) or 2S F₂ⁿ for "derived" (pointwise
    product bound).  Either reduces to its source condition at the claimed
    bounds F₁ ≤ 2, b ≤ 𝔅, c ≤ 2𝔆𝔅².
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    if coupling not in COUPLINGS:
        raise ValueError(f"coupling must be one of {COUPLINGS}")
    L = ledger
    E = L.E
    S = BRACKET_SUP
    kh = 1 + L.C * L.C3 * L.C1 * L.nu1 / L.nu0
    F1, b, c = mp.mpf(0), mp.mpf(0), mp.mpf(0)
    bounds = (2 * L.C1 * E, L.B * E, 2 * L.Cfrak * (L.B * E) ** 2)
    caps = (mp.mpf(2), L.B, 2 * L.Cfrak * L.B ** 2)
    steps, first, what = [], None, None
    keep = n_steps if keep is None else keep
    for n in range(1, n_steps + 1):
        F2 = b + c * E
        G = L.Cfrak * b + c * E / 2 if coupling == "displayed" else 2 * S * F2
        F1n = 1 + 2 * L.eta * F1 + 2 * L.C * E * F1 * (F1 * L.C1 + G)
        bn = L.C2 * L.C1 ** 2 * L.kappa_b * F1n
        cn = 2 * L.C ** 2 * F2 ** 2 * kh
        F1, b, c = F1n, bn, cn
        if n <= keep or n == n_steps:
            steps.append(IterationStep(n, F1 * L.C1 * E, b * E, c * E ** 2))
        if first is None:
            for name, v, cap in (("f1", F1, caps[0]), ("f2_lin", b, caps[1]),
                                 ("f2_nonlin", c, caps[2])):
                if v > cap * (1 + rtol):
                    first, what = n, name
                    break
        if not all(mp.isfinite(v) for v in (F1, b, c)):
            break
    return IterationReport(steps, bounds, first, what)


# -- ledger from measured constants -----------------------------------------
def _data(name: str) -> dict:
    return json.loads(resources.files("boltzwave").joinpath("data", name).read_text())


def default_ledger(eps: float = 0.0, f0_norm: float = 1.0) -> ClosureLedger:
    """Ledger built from the recorded empirical runs shipped with the package."""
    rec = _data("empirical_constants.json")
    k = rec["constants"]
    return ClosureLedger(beta=k["beta"], R=k["R"], C_eta=k["C_eta"], C_beta=k["C_beta"],
                         nu0=k["nu0"], nu1=k["nu1"], C=k["C"], C1=k["C1"], C2=k["C2"],
                         C3=k["C3"], Cpp=k["Cpp"], kappa=k["kappa"], eps=eps, f0_norm=f0_norm,
                         provenance=rec["provenance"])


def initial_data_constant(nu0: float, nu=None, speeds: Sequence[float] = tuple(range(0, 51)),
                          times: Sequence[float] = tuple(x / 4 for x in range(0, 81))) -> float:
    """sup of e^{-ν(ξ)t} e^{ν0(t + 1 + |ξ|t)/2}: free flow of data supported in the unit ball.

    Data at |x - ξt| ≤ 1 sits at |x| ≤ 1 + |ξ|t, which fixes the worst case.
    """
    from .collision import collision_frequency
    nu = nu or (lambda s: collision_frequency((s, 0.0, 0.0)))
    best = -math.inf
    for s in speeds:
        nv = nu(s)
        for t in times:
            best = max(best, -nv * t + 0.5 * nu0 * (t + 1 + s * t))
    return math.exp(best)


def measure_constants(beta: float = 1000.0, R: float = 200.0, kappa: float = 0.2,
                      mc_samples: int = 100_000, seed: int = 20240601,
                      lemma_ids: Sequence[str] | None = None, speeds_c: Sequence[float] | None = None,
                      workers: int | None = None) -> dict:
    """Re-run every empirical measurement feeding the default ledger."""
    import numpy as np

    from . import collision, lemma_verifier, transport
    from .quadrature import QuadratureSpec
    from .wave_patterns import SOUND_SPEED

    mc = QuadratureSpec(mc_samples=mc_samples, seed=seed)
    env = collision.nu_envelope(np.arange(0.0, 50.0 + 1e-9, 0.5))
    far = [(R, 0, 0), (0, 1.25 * R, 0), (0, 0, 1.5 * R), (2 * R, 0, 0), (3 * R, 0, 0), (4 * R, 0, 0)]
    krep = collision.k_weighted_bound_check(beta, R, far, mc)
    C_eta, C_beta = collision.empirical_eta_constants(krep, R)
    CQ, _ = collision.bilinear_constant(beta, [0, 1, 3, 10, 30, 100, R], mc)
    Cpp_emp, _ = collision.bilinear_constant(beta, [0, 1, 3, 10, 30, 100, R], mc, kappa,
                                             (0.0, 1.0, 5.0, 50.0))
    gains = [transport.gain_ratio_scan(transport.AnsatzSource("Stationary", 3, 3), env.nu0),
             transport.gain_ratio_scan(transport.AnsatzSource("Moving", 4, 2), env.nu0)]
    Cgain = max(g.empirical_sup for g in gains)
    ids = lemma_verifier.CASE_IDS if lemma_ids is None else lemma_ids
    sups = {}
    for c in (speeds_c or (SOUND_SPEED, 1.0)):
        for cid in ids:
            rep = lemma_verifier.verify(lemma_verifier.build_case(cid, c=c), workers=workers)
            sups[cid] = max(sups.get(cid, 0.0), rep.empirical_sup)
    lin = [sups[i] for i in ("L6.1", "L6.2", "L6.3") if i in sups]
    non = [v for i, v in sups.items() if i not in ("L6.1", "L6.2", "L6.3")]
    nu0, nu1 = env.nu0, env.nu1
    Cpp = max(Cpp_emp, 1.01 * (nu0 - kappa) / nu1)
    return {
        "constants": {"beta": beta, "R": R, "C_eta": C_eta, "C_beta": C_beta, "nu0": nu0,
                      "nu1": nu1, "C": max(CQ, Cgain), "C1": initial_data_constant(nu0),
                      "C2": max(lin) if lin else 1.0, "C3": max(non) if non else 1.0,
                      "Cpp": Cpp, "kappa": kappa},
        "provenance": {
            "nu0, nu1": "nu_envelope over |xi| in [0, 50], step 0.5",
            "C_eta, C_beta": f"k_weighted_bound_check, beta={beta}, R={R}, {mc_samples} samples",
            "eta_sup_far": krep.empirical_sup,
            "C": "max of the bilinear constant and the gain-decay sups",
            "bilinear_constant": CQ, "gain_decay_sup": Cgain,
            "C1": "initial_data_constant(nu0) = exp(nu0/2)",
            "C2": "max empirical sup of the exponential-source convolution cases",
            "C3": "max empirical sup of the remaining convolution cases",
            "lemma_sups": sups,
            "Cpp": "weighted bilinear constant, floored so that Cpp*nu1/(nu0-kappa) > 1",
            "Cpp_empirical": Cpp_emp,
            "mc_samples": mc_samples, "seed": seed,
        },
    }
