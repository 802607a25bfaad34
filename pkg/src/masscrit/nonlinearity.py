"""Nonlinearities g, their primitives G, and the perturbations h, H, rho.

Every model stores evaluators on s >= 0; ``Nonlinearity.g`` and ``Nonlinearity.G``
apply the odd/even extension.  Profiles of plateau type are built in the
logarithmic variable t = log s, where the slope bound |a'(s) s| is a Lipschitz
bound in t.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.optimize import minimize_scalar

from .grid import ProblemParams

Array = np.ndarray


def _asarray(s):
    a = np.asarray(s, dtype=float)
    return a, a.ndim == 0


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """g and G on [0, inf) plus metadata.

    kind is one of "power", "perturbed_power", "rho_family", "tabulated",
    "zero_mass_example".  ``alpha`` is the limit of h(s)/s at infinity.  When the
    deviation from the pure power is known in closed form, ``h_pos``/``H_pos`` hold
    it so that h and H do not suffer cancellation at large s.  ``g_fast`` is an
    optional scalar evaluator used inside ODE right-hand sides.
    """

    kind: str
    params: ProblemParams
    alpha: float
    g_pos: Callable[[Array], Array] = field(repr=False)
    G_pos: Callable[[Array], Array] = field(repr=False)
    h_pos: Callable[[Array], Array] | None = field(default=None, repr=False)
    H_pos: Callable[[Array], Array] | None = field(default=None, repr=False)
    g_fast: Callable[[float], float] | None = field(default=None, repr=False)
    profile: Callable[[Array], Array] | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def g(self, s):
        a, scalar = _asarray(s)
        out = np.sign(a) * self.g_pos(np.abs(a))
        return float(out) if scalar else out

    def G(self, s):
        a, scalar = _asarray(s)
        out = self.G_pos(np.abs(a))
        return float(out) if scalar else out

    def g_scalar(self, s: float) -> float:
        if self.g_fast is None:
            v = float(self.g_pos(np.array([abs(s)]))[0])
        else:
            v = self.g_fast(abs(s))
        return v if s >= 0 else -v

    def h(self, s):
        a, scalar = _asarray(s)
        if self.h_pos is not None:
            out = np.sign(a) * self.h_pos(np.abs(a))
        else:
            out = self.g(a) - np.abs(a) ** (self.params.p - 1) * a
        return float(out) if scalar else out

    def H(self, s):
        a, scalar = _asarray(s)
        if self.H_pos is not None:
            out = self.H_pos(np.abs(a))
        else:
            p = self.params.p
            out = self.G(a) - np.abs(a) ** (p + 1) / (p + 1)
        return float(out) if scalar else out

    def rho(self, s):
        a, scalar = _asarray(s)
        H = np.asarray(self.H(a))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(a != 0, H / (0.5 * a * a), 0.0)
        return float(out) if scalar else out

    @property
    def is_power(self) -> bool:
        return self.kind == "power"

    def scaled(self, mu: float) -> "Nonlinearity":
        """The nonlinearity seen at unit frequency after u -> mu^{N/4} u(mu^{1/2} x).

        g_mu(s) = mu^{-1-N/4} g(mu^{N/4} s) and G_mu(s) = mu^{-1-N/2} G(mu^{N/4} s), so that
        Psi_mu(u_mu) = mu * Psi_1[G_mu](u).  The pure power is invariant.
        """
        if mu == 1.0 or self.is_power:
            return self
        N = self.params.N
        amp = mu ** (N / 4)
        cg = mu ** (-1 - N / 4)
        cG = mu ** (-1 - N / 2)

        def wrap(f, c):
            if f is None:
                return None
            return lambda s: c * f(amp * s)

        prof = None
        if self.profile is not None:
            pf = self.profile
            prof = lambda s: pf(amp * np.asarray(s))
        return Nonlinearity(
            self.kind,
            self.params,
            self.alpha / mu,
            wrap(self.g_pos, cg),
            wrap(self.G_pos, cG),
            wrap(self.h_pos, cg),
            wrap(self.H_pos, cG),
            wrap(self.g_fast, cg),
            prof,
            {**self.meta, "scaled_mu": mu * self.meta.get("scaled_mu", 1.0)},
        )

    def describe(self) -> dict:
        return {"kind": self.kind, "N": self.params.N, "alpha": self.alpha, **self.meta}


def _zeros(s):
    return np.zeros_like(np.asarray(s, dtype=float))


def _power_outside(g_pos, p: float, lo: float, hi: float):
    # scalar evaluator for models that coincide with s^p outside (lo, hi)
    def fast(s: float) -> float:
        if lo < s < hi:
            return float(g_pos(np.array([s]))[0])
        return s**p
    return fast


def power(params: ProblemParams) -> Nonlinearity:
    p = params.p
    return Nonlinearity(
        "power", params, 0.0,
        lambda s: s**p,
        lambda s: s ** (p + 1) / (p + 1),
        _zeros, _zeros,
        lambda s: s**p,
    )


def perturbed_power(params: ProblemParams, a, da, alpha: float = 0.0, meta: dict | None = None,
                    a_scalar=None, da_scalar=None) -> Nonlinearity:
    """G(s) = (1 + a(s)) s^{p+1}/(p+1) for an even profile a with derivative da."""
    p = params.p

    def h_pos(s):
        sp = s**p
        return a(s) * sp + da(s) * sp * s / (p + 1)

    def H_pos(s):
        return a(s) * s ** (p + 1) / (p + 1)

    def g_pos(s):
        return s**p + h_pos(s)

    def G_pos(s):
        return s ** (p + 1) / (p + 1) + H_pos(s)

    fast = None
    if a_scalar is not None:
        def fast(s: float) -> float:
            sp = s**p
            return (1.0 + a_scalar(s)) * sp + da_scalar(s) * sp * s / (p + 1)

    return Nonlinearity("perturbed_power", params, alpha, g_pos, G_pos, h_pos, H_pos, fast,
                        profile=a, meta=dict(meta or {}))


def plateau_power(params: ProblemParams, alpha: float) -> Nonlinearity:
    """The exact (1 + alpha) |s|^{p-1} s nonlinearity (alpha kept as metadata only)."""
    return perturbed_power(params, lambda s: alpha + _zeros(s), _zeros, meta={"plateau": alpha},
                           a_scalar=lambda s: alpha, da_scalar=lambda s: 0.0)


# ---------------------------------------------------------------- bump families

def smooth_bump(s, center: float, halfwidth: float):
    """exp(1 - 1/(1 - x^2)) with x = (s - center)/halfwidth; equals 1 at the center."""
    x = (np.asarray(s, dtype=float) - center) / halfwidth
    out = np.zeros_like(x)
    m = np.abs(x) < 1
    xm = x[m]
    out[m] = np.exp(1.0 - 1.0 / (1.0 - xm * xm))
    return out


def smooth_bump_deriv(s, center: float, halfwidth: float):
    x = (np.asarray(s, dtype=float) - center) / halfwidth
    out = np.zeros_like(x)
    m = np.abs(x) < 1
    xm = x[m]
    q = 1.0 - xm * xm
    out[m] = np.exp(1.0 - 1.0 / q) * (-2.0 * xm / (q * q)) / halfwidth
    return out


def _bump1(s: float, center: float, halfwidth: float) -> float:
    x = (s - center) / halfwidth
    if abs(x) >= 1.0:
        return 0.0
    return math.exp(1.0 - 1.0 / (1.0 - x * x))


def _dbump1(s: float, center: float, halfwidth: float) -> float:
    x = (s - center) / halfwidth
    if abs(x) >= 1.0:
        return 0.0
    q = 1.0 - x * x
    return math.exp(1.0 - 1.0 / q) * (-2.0 * x / (q * q)) / halfwidth


def bump_family(params: ProblemParams, eps: float, sign: int = +1) -> Nonlinearity:
    """G = (1 +/- eps e^{1/((|s|-2)^2 - 1)}) G_0 on 1 < |s| < 3, G = G_0 elsewhere.

    sign=+1 gives G >= G_0 (negative levels), sign=-1 gives G <= G_0.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    c = sign * eps / math.e  # e^{1/(x^2-1)} = e^{-1} * smooth_bump
    a = lambda s: c * smooth_bump(s, 2.0, 1.0)
    da = lambda s: c * smooth_bump_deriv(s, 2.0, 1.0)
    return perturbed_power(params, a, da, meta={"family": "bump", "eps": eps, "sign": sign},
                           a_scalar=lambda s: c * _bump1(s, 2.0, 1.0),
                           da_scalar=lambda s: c * _dbump1(s, 2.0, 1.0))


# ---------------------------------------------------------------- rho families

RHO_PROFILES = ("rational", "gaussian")


def rho_family(params: ProblemParams, alpha: float, profile: str = "rational", k: float = 4.0) -> Nonlinearity:
    """H(s) = rho(s) s^2/2 with rho increasing from 0 to alpha.

    rational: rho = alpha s^k/(1+s^k);  gaussian: rho = alpha (1 - e^{-s^k}).
    The vanishing limit of h(s)/|s|^p at 0 needs k > 4/N.
    """
    p = params.p
    if k <= 0:
        raise ValueError("k must be positive")
    if profile == "rational":
        rho = lambda s: alpha * s**k / (1.0 + s**k)
        drho = lambda s: alpha * k * s ** (k - 1) / (1.0 + s**k) ** 2
    elif profile == "gaussian":
        rho = lambda s: alpha * -np.expm1(-(s**k))
        drho = lambda s: alpha * k * s ** (k - 1) * np.exp(-(s**k))
    else:
        raise ValueError(f"unknown rho profile {profile!r}; choose from {RHO_PROFILES}")

    h_pos = lambda s: rho(s) * s + 0.5 * drho(s) * s * s
    H_pos = lambda s: 0.5 * rho(s) * s * s
    g_pos = lambda s: s**p + h_pos(s)
    G_pos = lambda s: s ** (p + 1) / (p + 1) + H_pos(s)
    return Nonlinearity("rho_family", params, alpha, g_pos, G_pos, h_pos, H_pos, g_pos,
                        profile=rho, meta={"rho_profile": profile, "k": k})


# ---------------------------------------------------------------- plateau profiles

def _triweight_cdf(x):
    x = np.clip(x, -1.0, 1.0)
    return 35.0 / 32.0 * (x - x**3 + 0.6 * x**5 - x**7 / 7.0) + 0.5


def _cdf1(x: float) -> float:
    if x >= 1.0:
        return 1.0
    x2 = x * x
    return 35.0 / 32.0 * x * (1 - x2 + 0.6 * x2 * x2 - x2 * x2 * x2 / 7.0) + 0.5


def _ramp1(x: float) -> float:
    if x >= 1.0:
        return x
    x2 = x * x
    return 35.0 / 32.0 * x2 * (0.5 - x2 / 4 + x2 * x2 / 10 - x2 * x2 * x2 / 56) + x / 2 + 35.0 / 256.0


def _triweight_ramp(x):
    # second antiderivative of the triweight kernel; equals max(x, 0) outside [-1, 1]
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, -1.0, 1.0)
    inner = 35.0 / 32.0 * (xc**2 / 2 - xc**4 / 4 + xc**6 / 10 - xc**8 / 56) + xc / 2 + 35.0 / 256.0
    return np.where(x >= 1.0, x, np.where(x <= -1.0, 0.0, inner))


@dataclass(frozen=True)
class ProfileA:
    """Even plateau profile: a = alpha on [1/L, L], zero near 0 and infinity, |a'(s)s| <= tau.

    Built from the piecewise-logarithmic trapezoid (plateau on [1/(L+1), L+1], ramps of
    slope tau = 1/(2N^2) in log s) convolved with a triweight kernel of radius
    ``mollify_eps`` in log s.
    """

    alpha: float
    L: float
    N: int
    mollify_eps: float

    @property
    def tau(self) -> float:
        return 1.0 / (2 * self.N**2)

    @property
    def kinks(self) -> tuple[float, float, float, float]:
        lL = math.log(self.L + 1)
        w = abs(self.alpha) / self.tau
        return (-w - lL, -lL, lL, w + lL)

    @property
    def log_support(self) -> tuple[float, float]:
        """Closed interval in log s outside which a vanishes (empty -> (inf, -inf))."""
        if self.alpha == 0:
            return (math.inf, -math.inf)
        t0, _, _, t3 = self.kinks
        return (t0 - self.mollify_eps, t3 + self.mollify_eps)

    def _in_log(self, t, order: int):
        t = np.asarray(t, dtype=float)
        if self.alpha == 0:
            return np.zeros_like(t)
        c = math.copysign(self.tau, self.alpha)
        e = self.mollify_eps
        out = np.zeros_like(t)
        for tk, sgn in zip(self.kinks, (1, -1, -1, 1)):
            if order == 0:
                out += sgn * (e * _triweight_ramp((t - tk) / e) if e > 0 else np.maximum(t - tk, 0.0))
            else:
                out += sgn * (_triweight_cdf((t - tk) / e) if e > 0 else (t > tk).astype(float))
        out *= c
        # the ramp sum cancels only up to rounding; pin the exact values off the transitions
        lo, hi = self.log_support
        _, t1, t2, _ = self.kinks
        out[(t <= lo) | (t >= hi)] = 0.0
        flat = (t >= t1 + e) & (t <= t2 - e)
        out[flat] = self.alpha if order == 0 else 0.0
        return out

    def _scalar(self, t: float, order: int) -> float:
        lo, hi = self.log_support
        if not lo < t < hi:
            return 0.0
        _, t1, t2, _ = self.kinks
        e = self.mollify_eps
        if t1 + e <= t <= t2 - e:
            return self.alpha if order == 0 else 0.0
        c = math.copysign(self.tau, self.alpha)
        acc = 0.0
        for tk, sgn in zip(self.kinks, (1, -1, -1, 1)):
            x = (t - tk) / e if e > 0 else math.copysign(2.0, t - tk)
            if x <= -1.0:
                continue
            if order == 0:
                acc += sgn * (e * _ramp1(x) if e > 0 else t - tk)
            else:
                acc += sgn * _cdf1(x)
        return c * acc

    def at(self, s: float) -> float:
        s = abs(s)
        return 0.0 if s == 0 else self._scalar(math.log(s), 0)

    def dat(self, s: float) -> float:
        a = abs(s)
        if a == 0:
            return 0.0
        v = self._scalar(math.log(a), 1) / a
        return v if s > 0 else -v

    def __call__(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = self._in_log(np.log(s[pos]), 0)
        return out

    def slope(self, s):
        """a'(s) s, the derivative in log s."""
        s = np.abs(np.asarray(s, dtype=float))
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = self._in_log(np.log(s[pos]), 1)
        return out

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        out = np.zeros_like(a)
        pos = a > 0
        out[pos] = self._in_log(np.log(a[pos]), 1) / a[pos]
        return np.sign(s) * out

    def shifted(self, factor: float) -> Callable:
        """s -> a(s / factor) together with its derivative."""
        return (lambda s: self(np.asarray(s) / factor),
                lambda s: self.deriv(np.asarray(s) / factor) / factor)


def make_profile_a(alpha: float, L: float, params: ProblemParams, mollify_eps: float | None = None) -> ProfileA:
    if not abs(alpha) <= 0.5:
        raise ValueError(f"plateau value must satisfy |alpha| <= 1/2, got {alpha}")
    if not L > 1:
        raise ValueError(f"L must exceed 1, got {L}")
    margin = math.log((L + 1) / L)
    if mollify_eps is None:
        mollify_eps = 0.5 * margin
    if mollify_eps < 0:
        raise ValueError("mollify_eps must be nonnegative")
    if mollify_eps > margin:
        raise ValueError(
            f"mollify_eps={mollify_eps:.4g} would erode the plateau on [1/L, L]; "
            f"need mollify_eps <= log((L+1)/L) = {margin:.4g}"
        )
    return ProfileA(float(alpha), float(L), params.N, float(mollify_eps))


def verify_profile(a: ProfileA, n: int = 10_000) -> dict:
    """Re-check the four profile properties on a log sample; returns worst-case margins."""
    N = a.N
    lo, hi = a.log_support
    span = (-12.0, 12.0) if not np.isfinite(lo) else (min(lo - 2, -12.0), max(hi + 2, 12.0))
    s = np.exp(np.linspace(*span, n))
    vals = a(s)
    slope = np.abs(a.slope(s))
    plat = np.exp(np.linspace(-math.log(a.L), math.log(a.L), 2001))
    near0 = s < (math.exp(lo) if np.isfinite(lo) else np.inf)
    nearinf = s > (math.exp(hi) if np.isfinite(hi) else 0.0)
    return {
        "bounded": bool(np.all(np.abs(vals) <= 0.5)),
        "sup_abs": float(np.max(np.abs(vals))),
        "vanishes_near_0_and_inf": bool(np.all(vals[near0] == 0) and np.all(vals[nearinf] == 0)
                                        and vals[0] == 0 and vals[-1] == 0),
        "slope_bound": bool(np.max(slope) < 1.0 / N**2),
        "max_slope": float(np.max(slope)),
        "plateau": bool(np.all(a(plat) == a.alpha) or np.allclose(a(plat), a.alpha, rtol=0, atol=1e-15)),
        "plateau_dev": float(np.max(np.abs(a(plat) - a.alpha))),
    }


def profile_nonlinearity(a: ProfileA, params: ProblemParams) -> Nonlinearity:
    return perturbed_power(params, a, a.deriv,
                           meta={"family": "profile", "alpha_plateau": a.alpha, "L": a.L,
                                 "mollify_eps": a.mollify_eps},
                           a_scalar=a.at, da_scalar=a.dat)


class OverlappingSupportError(ValueError):
    def __init__(self, ell: float, min_ell: float):
        super().__init__(f"supports overlap for ell={ell:.6g}; the minimal admissible ell is {min_ell:.6g}")
        self.ell = ell
        self.min_ell = min_ell


def min_admissible_ell(a1: ProfileA, a2: ProfileA, N: int) -> float:
    lo1, hi1 = a1.log_support
    lo2, hi2 = a2.log_support
    if not (np.isfinite(hi1) and np.isfinite(lo2)):
        return 0.0
    return max(0.0, 4.0 / N * (hi1 - lo2))


def make_two_scale(a1: ProfileA, a2: ProfileA, ell: float, params: ProblemParams) -> Nonlinearity:
    """a_ell = a1 + a2(e^{-N ell/4} .) with disjoint supports."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    N = params.N
    if a1.alpha == 0 and a2.alpha == 0:
        return power(params)
    need = min_admissible_ell(a1, a2, N)
    if ell <= need:
        raise OverlappingSupportError(ell, need)
    f = math.exp(N * ell / 4)
    a2s, da2s = a2.shifted(f)
    a = lambda s: a1(s) + a2s(s)
    da = lambda s: a1.deriv(s) + da2s(s)
    return perturbed_power(params, a, da,
                           meta={"family": "two_scale", "alpha1": a1.alpha, "alpha2": a2.alpha,
                                 "L1": a1.L, "L2": a2.L, "ell": ell, "mollify_eps": a1.mollify_eps},
                           a_scalar=lambda s: a1.at(s) + a2.at(s / f),
                           da_scalar=lambda s: a1.dat(s) + a2.dat(s / f) / f)


# ---------------------------------------------------------------- perturbation space X

@dataclass(frozen=True, eq=False)
class PerturbationXi:
    """Even C^1 perturbation Xi of G with derivative dXi; p is the small-s weight exponent."""

    Xi: Callable[[Array], Array] = field(repr=False)
    dXi: Callable[[Array], Array] = field(repr=False)
    p: float = 3.0
    label: str = "xi"

    def __mul__(self, c: float) -> "PerturbationXi":
        X, dX = self.Xi, self.dXi
        return PerturbationXi(lambda s: c * X(s), lambda s: c * dX(s), self.p, f"{c}*{self.label}")

    __rmul__ = __mul__

    @cached_property
    def normX(self) -> float:
        return xi_norm(self)


def _refined_sup(f, s, vals):
    i = int(np.argmax(vals))
    lo = s[max(i - 1, 0)]
    hi = s[min(i + 1, s.size - 1)]
    best = vals[i]
    if hi > lo:
        res = minimize_scalar(lambda x: -f(np.array([x]))[0], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, hi)})
        best = max(best, -res.fun)
    return float(best)


def xi_norm(xi: PerturbationXi, n: int = 20_000, decades: float = 8.0) -> float:
    """sup_{0<|s|<=1} |Xi'(s)|/|s|^p + sup_{|s|>=1} |Xi'(s)|/|s| on log samples, refined at the maxima."""
    p = xi.p
    s_in = np.exp(np.linspace(-decades * math.log(10), 0.0, n))
    s_out = np.exp(np.linspace(0.0, decades * math.log(10), n))
    f_in = lambda s: np.abs(xi.dXi(s)) / s**p
    f_out = lambda s: np.abs(xi.dXi(s)) / s
    v_in = f_in(s_in)
    v_out = f_out(s_out)
    if not (np.all(np.isfinite(v_in)) and np.all(np.isfinite(v_out))):
        raise ValueError("perturbation derivative is not finite on the sample")
    return _refined_sup(f_in, s_in, v_in) + _refined_sup(f_out, s_out, v_out)


def xi_gq_norm(xi: PerturbationXi, q: float, n: int = 20_000, decades: float = 8.0) -> float:
    """sup (|Xi(s)| + |Xi'(s) s|)/|s|^{q+1} on a log sample."""
    s = np.exp(np.linspace(-decades * math.log(10), decades * math.log(10), 2 * n))
    f = lambda s: (np.abs(xi.Xi(s)) + np.abs(xi.dXi(s) * s)) / s ** (q + 1)
    return _refined_sup(f, s, f(s))


def make_xi(Xi, dXi, params: ProblemParams, label: str = "xi") -> PerturbationXi:
    return PerturbationXi(Xi, dXi, params.p, label)


def perturb(nl: Nonlinearity, xi: PerturbationXi, eps: float = 1.0) -> Nonlinearity:
    """G + eps * Xi, keeping kind and alpha (Xi has vanishing limits)."""
    if eps == 0:
        return nl
    dXi, Xi = xi.dXi, xi.Xi
    g0, G0 = nl.g_pos, nl.G_pos
    h0 = nl.h_pos or (lambda s: g0(s) - s**nl.params.p)
    H0 = nl.H_pos or (lambda s: G0(s) - s ** (nl.params.p + 1) / (nl.params.p + 1))
    return Nonlinearity(nl.kind, nl.params, nl.alpha,
                        lambda s: g0(s) + eps * dXi(s),
                        lambda s: G0(s) + eps * Xi(s),
                        lambda s: h0(s) + eps * dXi(s),
                        lambda s: H0(s) + eps * Xi(s),
                        None, nl.profile, {**nl.meta, "xi": xi.label, "xi_eps": eps})


# ---------------------------------------------------------------- zero-mass examples

def _g2_bumps():
    # chi: dip of F_1' to zero at s = 2;  kappa: compensating steepening on (1.05, 1.55)
    return (2.0, 0.4), (1.3, 0.25)


def make_g2_example(params: ProblemParams, eps: float = 0.0, tab_points: int = 20_001) -> Nonlinearity:
    """G = G_1 + eps * Upsilon with F_1 = s^{-2*} G_1 nonincreasing and F_1'(2) = 0.

    F_1 equals s^{p+1-2*}/(p+1) off (1, 3); inside, F_1' = P'(1 - chi + c kappa) with a
    bump chi (chi(2) = 1) and a compensating bump kappa, so F_1 <= P and F_1 returns to P.
    Upsilon = |s|^{2*} phi with phi a bump on (1.7, 2.9), phi'(2) > 0; for eps > 0 the
    quotient (G_1 + eps Upsilon)/s^{2*} increases at s = 2 and (g3) fails there.
    """
    N = params.N
    if N < 3:
        raise ValueError("make_g2_example needs N >= 3; use make_g2_example_planar for N = 2")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    p = params.p
    ts = params.two_star
    k = p + 1 - ts
    P = lambda s: s**k / (p + 1)
    dP = lambda s: k * s ** (k - 1) / (p + 1)
    (cc, wc), (ck, wk) = _g2_bumps()
    chi = lambda s: smooth_bump(s, cc, wc)
    kap = lambda s: smooth_bump(s, ck, wk)
    t = np.linspace(1.0, 3.0, tab_points)
    c_kap = np.trapezoid(dP(t) * chi(t), t) / np.trapezoid(dP(t) * kap(t), t)
    dD = lambda s: dP(s) * (c_kap * kap(s) - chi(s))
    D_tab = cumulative_simpson(dD(t), x=t, initial=0.0)
    D_tab -= np.linspace(0.0, D_tab[-1], t.size)  # remove the O(h^4) closure residual
    D_spl = CubicHermiteSpline(t, D_tab, dD(t))

    def D(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        m = (s > 1.0) & (s < 3.0)
        out[m] = D_spl(s[m])
        return out

    F1 = lambda s: P(s) + D(s)
    dF1 = lambda s: dP(s) + dD(s)
    phi_c, phi_w = 2.3, 0.6
    phi = lambda s: smooth_bump(s, phi_c, phi_w)
    dphi = lambda s: smooth_bump_deriv(s, phi_c, phi_w)

    def G_pos(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = s**ts * (F1(s) + eps * phi(s))
        return np.where(s > 0, out, 0.0)

    def g_pos(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = ts * s ** (ts - 1) * (F1(s) + eps * phi(s)) + s**ts * (dF1(s) + eps * dphi(s))
        return np.where(s > 0, out, 0.0)

    nl = Nonlinearity("zero_mass_example", params, 0.0, g_pos, G_pos,
                      g_fast=_power_outside(g_pos, p, 1.0, 3.0),
                      meta={"example": "g2", "eps": eps})
    object.__setattr__(nl, "parts", {"F1": F1, "dF1": dF1, "phi": phi, "dphi": dphi})
    return nl


def upsilon(params: ProblemParams) -> PerturbationXi:
    """Upsilon = |s|^{2*} phi(s), the perturbation used with make_g2_example."""
    ts = params.two_star
    phi = lambda s: smooth_bump(np.abs(s), 2.3, 0.6)
    dphi = lambda s: np.sign(s) * smooth_bump_deriv(np.abs(s), 2.3, 0.6)
    Xi = lambda s: np.abs(s) ** ts * phi(s)
    dXi = lambda s: ts * np.sign(s) * np.abs(s) ** (ts - 1) * phi(s) + np.abs(s) ** ts * dphi(s)
    return make_xi(Xi, dXi, params, "upsilon")


def make_g2_example_planar(params: ProblemParams, eps: float = 0.0) -> Nonlinearity:
    """N = 2 branch: G_1 = (1 - psi) s^{p+1}/(p+1) with G_1(2) = 0, minus eps * phi.

    For eps > 0, G(2) < 0 so the N = 2 form of (g3), G >= 0, fails.
    """
    if params.N != 2:
        raise ValueError("make_g2_example_planar is the N = 2 branch")
    p = params.p
    psi = lambda s: smooth_bump(s, 2.0, 1.0)
    dpsi = lambda s: smooth_bump_deriv(s, 2.0, 1.0)
    phi = lambda s: smooth_bump(s, 2.0, 0.5)
    dphi = lambda s: smooth_bump_deriv(s, 2.0, 0.5)
    G_pos = lambda s: (1 - psi(s)) * s ** (p + 1) / (p + 1) - eps * phi(s)
    g_pos = lambda s: (1 - psi(s)) * s**p - dpsi(s) * s ** (p + 1) / (p + 1) - eps * dphi(s)
    return Nonlinearity("zero_mass_example", params, 0.0, g_pos, G_pos,
                        g_fast=_power_outside(g_pos, p, 1.0, 3.0),
                        meta={"example": "g2_planar", "eps": eps})


# ---------------------------------------------------------------- tabulated

def tabulated(params: ProblemParams, s_tab, g_tab, alpha: float = 0.0, source: str | None = None) -> Nonlinearity:
    """Monotone cubic interpolation of g on [s_min, s_max], power-law continuation outside."""
    s_tab = np.asarray(s_tab, dtype=float)
    g_tab = np.asarray(g_tab, dtype=float)
    order = np.argsort(s_tab)
    s_tab, g_tab = s_tab[order], g_tab[order]
    keep = s_tab > 0
    s_tab, g_tab = s_tab[keep], g_tab[keep]
    if s_tab.size < 4:
        raise ValueError("a tabulated nonlinearity needs at least 4 positive nodes")
    p = params.p
    spl = PchipInterpolator(s_tab, g_tab, extrapolate=False)
    prim = spl.antiderivative()
    s0, s1 = s_tab[0], s_tab[-1]
    c0 = g_tab[0] / s0**p
    c1 = g_tab[-1] / s1**p
    G_s0 = c0 * s0 ** (p + 1) / (p + 1)
    G_s1 = G_s0 + float(prim(s1) - prim(s0))

    def g_pos(s):
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        lo, hi = s < s0, s > s1
        mid = ~(lo | hi)
        out[lo] = c0 * s[lo] ** p
        out[hi] = c1 * s[hi] ** p
        out[mid] = spl(s[mid])
        return out

    def G_pos(s):
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        lo, hi = s < s0, s > s1
        mid = ~(lo | hi)
        out[lo] = c0 * s[lo] ** (p + 1) / (p + 1)
        out[hi] = G_s1 + c1 * (s[hi] ** (p + 1) - s1 ** (p + 1)) / (p + 1)
        out[mid] = G_s0 + prim(s[mid]) - prim(s0)
        return out

    return Nonlinearity("tabulated", params, alpha, g_pos, G_pos,
                        meta={"table": source or "<inline>", "nodes": int(s_tab.size)})


def load_table(path, params: ProblemParams, alpha: float = 0.0) -> Nonlinearity:
    path = Path(path)
    with path.open() as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["s", "g"]:
        raise ValueError(f"{path}: expected a CSV header 's,g'")
    data = np.array([[float(c) for c in row] for row in rows[1:] if row], dtype=float)
    return tabulated(params, data[:, 0], data[:, 1], alpha, source=str(path))


# ---------------------------------------------------------------- condition checks

@dataclass(frozen=True)
class Verdict:
    holds: bool
    margin: float
    witness: float | None = None

    def as_dict(self) -> dict:
        return {"holds": self.holds, "margin": self.margin, "witness": self.witness}


@dataclass(frozen=True)
class ConditionReport:
    ar: Verdict
    g3: Verdict
    rho_below_alpha: Verdict
    rho_monotone: Verdict
    limit_zero: Verdict
    limit_inf: Verdict

    def as_dict(self) -> dict:
        return {k: getattr(self, k).as_dict() for k in
                ("ar", "g3", "rho_below_alpha", "rho_monotone", "limit_zero", "limit_inf")}


def default_sample(n: int = 10_000) -> np.ndarray:
    return np.logspace(-6, 6, n)


def _refine_sign_changes(f, s):
    # adds bisection-refined points where f changes sign between consecutive samples
    v = f(s)
    idx = np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]
    extra = []
    for i in idx[:64]:
        lo, hi = s[i], s[i + 1]
        flo = v[i]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = f(np.array([mid]))[0]
            if np.sign(fm) == np.sign(flo):
                lo, flo = mid, fm
            else:
                hi = mid
        extra.extend([lo, hi])
    if extra:
        s = np.unique(np.concatenate([s, extra]))
    return s


def _min_verdict(vals, s, tol=0.0) -> Verdict:
    i = int(np.argmin(vals))
    m = float(vals[i])
    return Verdict(m >= -tol, m, None if m >= -tol else float(s[i]))


def check_conditions(nl: Nonlinearity, sample=None, tol: float = 1e-3) -> ConditionReport:
    s = default_sample() if sample is None else np.asarray(sample, dtype=float)
    s = s[s > 0]
    p = nl.params.p
    N = nl.params.N
    norm = lambda x: x ** (p + 1)

    ar_f = lambda x: (nl.g(x) * x - 0.5 * (p + 3) * nl.G(x)) / norm(x)
    g3_f = lambda x: (nl.G(x) - (N - 2) / (2 * N) * nl.g(x) * x) / norm(x)
    s_ar = _refine_sign_changes(ar_f, s)
    s_g3 = _refine_sign_changes(g3_f, s)
    ar = _min_verdict(ar_f(s_ar), s_ar, tol=1e-14)
    g3 = _min_verdict(g3_f(s_g3), s_g3, tol=1e-14)

    rho = nl.rho(s)
    gap = nl.alpha - rho
    i = int(np.argmin(gap))
    # strictness is only resolvable where alpha - rho exceeds rounding of alpha itself
    resolvable = gap > 4 * np.finfo(float).eps * max(abs(nl.alpha), 1e-300)
    strict = bool(np.all(gap >= 0) and np.all(resolvable[s <= 1.0]))
    if strict:
        rho_below = Verdict(True, float(gap[i]), None)
    else:
        bad = np.nonzero((gap < 0) | (~resolvable & (s <= 1.0)))[0]
        rho_below = Verdict(False, float(gap[i]), float(s[bad[0]]))

    inc = np.diff(rho)
    scale = max(1.0, float(np.max(np.abs(rho))))
    j = int(np.argmax(inc))
    mono_ok = bool(inc[j] <= 1e-14 * scale)
    rho_mono = Verdict(mono_ok, float(-inc[j]), None if mono_ok else float(s[j + 1]))

    # (g1*) limits, certified on the last two decades of the sample at each end
    lo_mask = s <= s[0] * 100
    r0 = np.abs(nl.h(s[lo_mask]) / s[lo_mask] ** p)
    trend0 = bool(np.all(np.diff(r0) >= -1e-12 * max(1.0, r0.max()))) or r0.max() < 1e-12
    lim0 = Verdict(bool(r0.max() < tol and trend0), float(tol - r0.max()),
                   None if r0.max() < tol else float(s[lo_mask][int(np.argmax(r0))]))
    hi_mask = s >= s[-1] / 100
    rinf = np.abs(nl.h(s[hi_mask]) / s[hi_mask] - nl.alpha)
    trendinf = bool(np.all(np.diff(rinf) <= 1e-12 * max(1.0, rinf.max()))) or rinf.max() < 1e-12
    liminf = Verdict(bool(rinf.max() < tol and trendinf), float(tol - rinf.max()),
                     None if rinf.max() < tol else float(s[hi_mask][int(np.argmax(rinf))]))
    return ConditionReport(ar, g3, rho_below, rho_mono, lim0, liminf)
