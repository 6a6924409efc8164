"""Radial space-time decay profiles and the region split of the (|x|, t) plane.

Every profile depends on x only through r = |x|.  Besides pointwise
evaluation each kind exposes the closed-form moment ``∫ z p(z, t) dz`` used
by the spherical reduction in :mod:`boltzwave.convolution`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.special import betainc, betaincc, beta as beta_fn, erf, erfc

SOUND_SPEED = math.sqrt(5.0 / 3.0)
DEFAULT_D0 = 1.0
DEFAULT_C0 = 2.0

KINDS = ("DiffusionGauss", "HuygensGauss", "RieszPoly", "HuygensPoly",
         "SpaceTimeExp", "DiffusionPoly")


@dataclass(frozen=True)
class WavePattern:
    """One term A·profile(r, t).

    Kinds::

        DiffusionGauss  (1+t)^-a exp(-r²/(D(1+t)))
        HuygensGauss    (1+t)^-a exp(-(r-ct)²/(D(1+t)))
        RieszPoly       1{r<=ct} (1+t)^-a (1+r²/(1+t))^-b
        HuygensPoly     (1+t)^-a (1+(r-ct)²/(1+t))^-b
        SpaceTimeExp    exp(-(t+r)/cexp)
        DiffusionPoly   (1+t)^-a (1+r²/(1+t))^-b
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    D: float = DEFAULT_D0
    c: float = SOUND_SPEED
    cexp: float = DEFAULT_C0
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        if self.D <= 0 or self.c <= 0 or self.cexp <= 0:
            raise ValueError("scale constants must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if self.kind in ("RieszPoly", "HuygensPoly", "DiffusionPoly") and self.b <= 0.5:
            raise ValueError("polynomial exponent b must exceed 1/2")

    # -- evaluation ---------------------------------------------------------
    def __call__(self, r, t):
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        s = 1.0 + t
        k = self.kind
        if k == "SpaceTimeExp":
            out = np.exp(-(t + r) / self.cexp)
        else:
            pref = s ** (-self.a)
            if k == "DiffusionGauss":
                out = pref * np.exp(-r * r / (self.D * s))
            elif k == "HuygensGauss":
                u = r - self.c * t
                out = pref * np.exp(-u * u / (self.D * s))
            elif k == "HuygensPoly":
                u = r - self.c * t
                out = pref * (1.0 + u * u / s) ** (-self.b)
            else:
                out = pref * (1.0 + r * r / s) ** (-self.b)
                if k == "RieszPoly":
                    out = np.where(r <= self.c * t, out, 0.0)
        return self.amplitude * out

    def scaled(self, alpha: float) -> "WavePattern":
        return replace(self, amplitude=self.amplitude * alpha)

    @property
    def moving(self) -> bool:
        return self.kind in ("HuygensGauss", "HuygensPoly")

    # -- geometry used for quadrature breakpoints ---------------------------
    def width(self, t):
        s = 1.0 + np.asarray(t, dtype=float)
        if self.kind in ("DiffusionGauss", "HuygensGauss"):
            return np.sqrt(self.D * s)
        if self.kind == "SpaceTimeExp":
            return np.full_like(s, self.cexp)
        return np.sqrt(s)

    def center(self, t):
        t = np.asarray(t, dtype=float)
        return self.c * t if self.moving else np.zeros_like(t)

    def edge(self, t):
        """Hard cut-off radius, or None."""
        if self.kind == "RieszPoly":
            return self.c * np.asarray(t, dtype=float)
        return None

    # -- closed-form radial moment ∫_lo^hi z p(z, t) dz ---------------------
    def zmoment(self, lo, hi, t):
        lo, hi, t = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float),
                                        np.asarray(t, float))
        s = 1.0 + t
        k = self.kind
        if k == "RieszPoly":
            hi = np.minimum(hi, self.c * t)
            hi = np.maximum(hi, lo)
        if k == "SpaceTimeExp":
            kk = self.cexp
            val = np.exp(-t / kk) * (kk * (lo + kk) * np.exp(-lo / kk)
                                     - kk * (hi + kk) * np.exp(-hi / kk))
        elif k in ("DiffusionGauss", "HuygensGauss"):
            m = self.c * t if k == "HuygensGauss" else np.zeros_like(t)
            ds = self.D * s
            ul, uh = (lo - m) / np.sqrt(ds), (hi - m) / np.sqrt(ds)
            val = 0.5 * ds * (np.exp(-ul * ul) - np.exp(-uh * uh))
            if k == "HuygensGauss":
                val = val + m * 0.5 * np.sqrt(np.pi * ds) * _erf_diff(ul, uh)
            val = val * s ** (-self.a)
        else:
            m = self.c * t if k == "HuygensPoly" else np.zeros_like(t)
            vl, vh = (lo - m) / np.sqrt(s), (hi - m) / np.sqrt(s)
            val = s * _poly_odd_diff(vl, vh, self.b)
            if k == "HuygensPoly":
                val = val + m * np.sqrt(s) * _poly_even_diff(vl, vh, self.b)
            val = val * s ** (-self.a)
        return self.amplitude * np.maximum(val, 0.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WavePattern":
        return cls(**{k: d[k] for k in ("kind", "a", "b", "D", "c", "cexp", "amplitude") if k in d})


def _erf_diff(a, b):
    """erf(b) - erf(a) without cancellation in either tail."""
    pos = a > 0
    neg = b < 0
    out = erf(b) - erf(a)
    out = np.where(pos, erfc(a) - erfc(b), out)
    out = np.where(neg, erfc(-b) - erfc(-a), out)
    return out


def _poly_odd_diff(vl, vh, b):
    """∫_vl^vh v (1+v²)^-b dv."""
    if abs(b - 1.0) < 1e-14:
        return 0.5 * (np.log1p(vh * vh) - np.log1p(vl * vl))
    return 0.5 * ((1 + vh * vh) ** (1 - b) - (1 + vl * vl) ** (1 - b)) / (1 - b)


def _poly_even_diff(vl, vh, b):
    """∫_vl^vh (1+v²)^-b dv through the regularized incomplete beta function."""
    half = 0.5 * beta_fn(0.5, b - 0.5)
    xl = vl * vl / (1 + vl * vl)
    xh = vh * vh / (1 + vh * vh)
    # signed primitive G(v) = sign(v)·half·I_x ; use complements in the tails
    same_pos = vl >= 0
    same_neg = vh <= 0
    out = half * (np.sign(vh) * betainc(0.5, b - 0.5, xh) - np.sign(vl) * betainc(0.5, b - 0.5, xl))
    out = np.where(same_pos, half * (betaincc(0.5, b - 0.5, xl) - betaincc(0.5, b - 0.5, xh)), out)
    out = np.where(same_neg, half * (betaincc(0.5, b - 0.5, xh) - betaincc(0.5, b - 0.5, xl)), out)
    return out


@dataclass(frozen=True)
class WaveSum:
    """Finite sum of patterns; the empty sum is identically zero."""

    terms: tuple[WavePattern, ...] = field(default_factory=tuple)

    def __init__(self, terms: Iterable[WavePattern] = ()):
        object.__setattr__(self, "terms", tuple(terms))

    def __call__(self, r, t):
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast(r, t).shape)
        for p in self.terms:
            out = out + p(r, t)
        return out

    def __add__(self, other: "WaveSum | WavePattern") -> "WaveSum":
        return WaveSum(self.terms + as_sum(other).terms)

    def __len__(self) -> int:
        return len(self.terms)

    def scaled(self, alpha: float) -> "WaveSum":
        return WaveSum(p.scaled(alpha) for p in self.terms)

    def nonzero(self) -> "WaveSum":
        return WaveSum(p for p in self.terms if p.amplitude > 0)

    def to_list(self) -> list[dict]:
        return [p.to_dict() for p in self.terms]

    def to_json(self) -> str:
        return json.dumps(self.to_list())

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "WaveSum":
        return cls(WavePattern.from_dict(d) for d in items)


def as_sum(p: "WavePattern | WaveSum") -> WaveSum:
    return p if isinstance(p, WaveSum) else WaveSum([p])


def evaluate(p: "WavePattern | WaveSum", r, t):
    """Value of a pattern or sum at radius ``r`` and time ``t`` (both ≥ 0)."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(r < 0) or np.any(t < 0):
        raise ValueError("r and t must be nonnegative")
    out = p(r, t)
    return float(out) if np.ndim(out) == 0 else out


# -- convenience constructors -----------------------------------------------
def diffusion_gauss(a, D=DEFAULT_D0, amp=1.0):
    return WavePattern("DiffusionGauss", a=a, D=D, amplitude=amp)


def huygens_gauss(a, D=DEFAULT_D0, c=SOUND_SPEED, amp=1.0):
    return WavePattern("HuygensGauss", a=a, D=D, c=c, amplitude=amp)


def riesz_poly(a, b, c=SOUND_SPEED, amp=1.0):
    return WavePattern("RieszPoly", a=a, b=b, c=c, amplitude=amp)


def huygens_poly(a, b, c=SOUND_SPEED, amp=1.0):
    return WavePattern("HuygensPoly", a=a, b=b, c=c, amplitude=amp)


def diffusion_poly(a, b, amp=1.0):
    return WavePattern("DiffusionPoly", a=a, b=b, amplitude=amp)


def spacetime_exp(cexp=DEFAULT_C0, amp=1.0):
    return WavePattern("SpaceTimeExp", cexp=cexp, amplitude=amp)


# -- regions ----------------------------------------------------------------
class Region(str, Enum):
    D1 = "D1"
    D2 = "D2"
    D3 = "D3"
    D4 = "D4"
    D5 = "D5"


def region_masks(r, t, c: float = SOUND_SPEED) -> dict[Region, np.ndarray]:
    """Raw membership of each closed region (overlaps allowed)."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    w = np.sqrt(1.0 + t)
    return {
        Region.D1: r <= w,
        Region.D2: np.abs(r - c * t) <= w,
        Region.D3: r >= c * t + w,
        Region.D4: (r >= w) & (r <= 0.5 * c * t),
        Region.D5: (r >= 0.5 * c * t) & (r <= c * t - w),
    }


def classify_region(r: float, t: float, c: float = SOUND_SPEED) -> Region:
    """Region containing (r, t); ties resolved in the order D1 > D2 > D3 > D4 > D5."""
    if r < 0 or t < 0:
        raise ValueError("r and t must be nonnegative")
    masks = region_masks(r, t, c)
    for reg in Region:
        if bool(masks[reg]):
            return reg
    raise ValueError(f"(r={r}, t={t}) lies in no region")  # unreachable for t >= 0


def region_interval(region: Region, t: float, c: float = SOUND_SPEED,
                    depth: float = 3.0) -> tuple[float, float]:
    """Radial interval of a region at time t; D3 is cut at ``depth`` widths past its edge."""
    w = math.sqrt(1.0 + t)
    if region is Region.D1:
        return 0.0, w
    if region is Region.D2:
        return max(c * t - w, 0.0), c * t + w
    if region is Region.D3:
        return c * t + w, c * t + (1.0 + depth) * w
    if region is Region.D4:
        return w, 0.5 * c * t
    return 0.5 * c * t, c * t - w


# -- ansatz -----------------------------------------------------------------
def green_bound(c: float = SOUND_SPEED, D0: float = DEFAULT_D0, c0: float = DEFAULT_C0,
                amp: float = 1.0, vanishing_mode: bool = False) -> WaveSum:
    """Four-term pointwise bound of the linear wave propagator.

    With ``vanishing_mode`` the cone, diffusion and Riesz exponents become
    5/2, 2, 2, the sharper variant for data whose non-fluid part vanishes.
    """
    ah, ad, ar = (2.5, 2.0, 2.0) if vanishing_mode else (2.0, 1.5, 1.5)
    return WaveSum([
        huygens_gauss(ah, D0, c, amp),
        diffusion_gauss(ad, D0, amp),
        riesz_poly(ar, 1.5, c, amp),
        spacetime_exp(c0, amp),
    ])


def linear_ansatz(eps_norm: float, B: float = 1.0, c: float = SOUND_SPEED,
                  D_hat: float = 4 * DEFAULT_D0, c_hat: float = 4 * DEFAULT_C0) -> WaveSum:
    """First-order profile B·ε‖f0‖·[Huygens + diffusion + Riesz + exponential]."""
    if eps_norm < 0:
        raise ValueError("eps_norm must be nonnegative")
    amp = B * eps_norm
    return WaveSum([
        huygens_gauss(2.0, D_hat, c, amp),
        diffusion_gauss(1.5, D_hat, amp),
        riesz_poly(1.5, 1.5, c, amp),
        spacetime_exp(c_hat, amp),
    ])


def nonlinear_ansatz(eps_norm: float, B: float = 1.0, Cfrak: float = 1.0,
                     c: float = SOUND_SPEED) -> WaveSum:
    """Second-order profile 2𝔆(B·ε‖f0‖)²·[diffusion-type + cone-type]."""
    if eps_norm < 0:
        raise ValueError("eps_norm must be nonnegative")
    amp = 2.0 * Cfrak * (B * eps_norm) ** 2
    return WaveSum([
        diffusion_poly(2.0, 1.5, amp),
        huygens_poly(2.5, 1.0, c, amp),
    ])


def parse_pattern(text: str, c: float = SOUND_SPEED, D: float = DEFAULT_D0,
                  cexp: float = DEFAULT_C0) -> WavePattern:
    """Parse a short form such as ``huygens:2.5``, ``hpoly:4,2`` or ``exp:2``."""
    name, _, args = text.partition(":")
    vals = [float(v) for v in args.split(",") if v.strip()] if args else []
    name = name.strip().lower()
    table = {
        "huygens": ("HuygensGauss", ("a", "D")),
        "diffusion": ("DiffusionGauss", ("a", "D")),
        "riesz": ("RieszPoly", ("a", "b")),
        "hpoly": ("HuygensPoly", ("a", "b")),
        "dpoly": ("DiffusionPoly", ("a", "b")),
        "exp": ("SpaceTimeExp", ("cexp",)),
    }
    if name not in table:
        raise ValueError(f"unknown pattern shorthand {name!r}")
    kind, keys = table[name]
    if len(vals) > len(keys):
        raise ValueError(f"too many parameters for {name!r}")
    kw = {"kind": kind, "c": c, "D": D, "cexp": cexp}
    kw.update(dict(zip(keys, vals)))
    return WavePattern(**kw)
