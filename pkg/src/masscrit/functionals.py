"""Action, energy and Lagrangian functionals plus identity residuals on radial functions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import RadialFunction, integrate, norms
from .nonlinearity import Nonlinearity


class NonFiniteFunctional(ValueError):
    """A functional overflowed; ``r`` is the first radius with a non-finite integrand."""

    def __init__(self, what: str, r: float):
        super().__init__(f"{what} is not finite (first bad node at r = {r:.6g})")
        self.what = what
        self.r = r


@dataclass(frozen=True)
class FunctionalValues:
    action_psi: float   # Psi_mu(u)
    energy: float       # constrained energy, gradient term minus int G
    lagrangian: float   # Psi_mu(u) - mu m
    zero_mass: float    # Z_G(u), equal to the energy
    Q: float            # int g(u)u - 2G(u)
    K: float | None     # unit-frequency action of the rescaled nonlinearity (perturbed powers)
    pohozaev_res: float
    nehari_res: float

    def as_dict(self) -> dict:
        return asdict(self)


def _checked_integral(u: RadialFunction, f: np.ndarray, what: str) -> float:
    bad = ~np.isfinite(f)
    if np.any(bad):
        raise NonFiniteFunctional(what, float(u.r[np.argmax(bad)]))
    val = integrate(u.grid, f)
    if not math.isfinite(val):
        raise NonFiniteFunctional(what, float(u.r[np.argmax(np.abs(f))]))
    return val


@dataclass(frozen=True)
class _Parts:
    grad2: float
    mass: float
    intG: float
    intgu: float


def _parts(nl: Nonlinearity, u: RadialFunction) -> _Parts:
    nm = norms(u)
    v = u.values
    with np.errstate(over="ignore", invalid="ignore"):
        G = nl.G(v)
        gu = nl.g(v) * v
    return _Parts(nm.grad2, nm.mass, _checked_integral(u, G, "int G(u)"), _checked_integral(u, gu, "int g(u)u"))


def _pohozaev(N: int, P: _Parts, mu: float) -> float:
    lhs = 0.5 * (N - 2) * P.grad2 - N * (P.intG - mu * P.mass)
    return lhs / (P.grad2 + 2.0 * mu * P.mass + 1.0)


def _nehari(P: _Parts, mu: float) -> float:
    return (P.grad2 + 2.0 * mu * P.mass - P.intgu) / (P.grad2 + 2.0 * mu * P.mass + 1.0)


def evaluate(nl: Nonlinearity, u: RadialFunction, lam: float, m: float) -> FunctionalValues:
    """All functionals at frequency mu = e^lam and target mass m."""
    if not m > 0:
        raise ValueError(f"mass must be positive, got {m}")
    mu = math.exp(lam)
    P = _parts(nl, u)
    energy = 0.5 * P.grad2 - P.intG
    psi = energy + mu * P.mass
    K = None
    if nl.kind == "perturbed_power":
        Gs = nl.scaled(mu).G(u.values)
        K = 0.5 * P.grad2 + P.mass - _checked_integral(u, Gs, "int G_mu(u)")
    return FunctionalValues(
        action_psi=psi,
        energy=energy,
        lagrangian=psi - mu * m,
        zero_mass=energy,
        Q=P.intgu - 2.0 * P.intG,
        K=K,
        pohozaev_res=_pohozaev(u.grid.N, P, mu),
        nehari_res=_nehari(P, mu),
    )


def energy(nl: Nonlinearity, u: RadialFunction) -> float:
    P = _parts(nl, u)
    return 0.5 * P.grad2 - P.intG


def action(nl: Nonlinearity, u: RadialFunction, mu: float) -> float:
    P = _parts(nl, u)
    return 0.5 * P.grad2 + mu * P.mass - P.intG


def pohozaev_residual(nl: Nonlinearity, u: RadialFunction, mu: float) -> float:
    """Scaling identity residual; mu = 0 gives the zero-mass form N Z_G(u) - grad2."""
    return _pohozaev(u.grid.N, _parts(nl, u), mu)


def nehari_residual(nl: Nonlinearity, u: RadialFunction, mu: float) -> float:
    return _nehari(_parts(nl, u), mu)


def residuals(nl: Nonlinearity, u: RadialFunction, mu: float) -> tuple[float, float]:
    P = _parts(nl, u)
    return _pohozaev(u.grid.N, P, mu), _nehari(P, mu)


@dataclass(frozen=True)
class GNCheck:
    holds: bool
    slack: float
    vacuous: bool


def gn_check(u: RadialFunction, m1: float, rtol: float = 1e-8) -> GNCheck:
    """Slack in grad2/2 >= lp1/(p+1), which holds whenever the mass is at most m1."""
    nm = norms(u)
    p = u.grid.params.p
    slack = 0.5 * nm.grad2 - nm.lp1 / (p + 1)
    vacuous = nm.mass > m1 * (1 + 1e-12)
    return GNCheck(bool(slack >= -rtol * (nm.grad2 + 1e-300)), float(slack), bool(vacuous))


def _dilated_parts(nl: Nonlinearity, u: RadialFunction, t: float) -> tuple[float, float, float]:
    # integrals of u_t = t^{1/2} u(t^{1/2} .) evaluated in the stretched variable, N = 2
    if u.grid.N != 2:
        raise ValueError("the dilation u_t = t^{1/2} u(t^{1/2} .) is used for N = 2 only")
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    nm = norms(u)
    w = math.sqrt(t) * u.values
    with np.errstate(over="ignore", invalid="ignore"):
        G = nl.G(w)
        gw = nl.g(w) * w
    intG = _checked_integral(u, G, "int G(u_t)") / t
    intgu = _checked_integral(u, gw, "int g(u_t)u_t") / t
    return t * nm.grad2, intG, intgu


def dilation_energy(nl: Nonlinearity, u: RadialFunction, t: float) -> float:
    """Energy of the mass-preserving dilation u_t (N = 2)."""
    grad2, intG, _ = _dilated_parts(nl, u, t)
    return 0.5 * grad2 - intG


def dt_energy_along_dilation(nl: Nonlinearity, u: RadialFunction, t: float) -> float:
    """d/dt of the energy of u_t, via (grad2(u_t) - Q(u_t)) / (2t)."""
    grad2, intG, intgu = _dilated_parts(nl, u, t)
    Q = intgu - 2.0 * intG
    return 0.5 * (grad2 - Q) / t


def dt_energy_fd(nl: Nonlinearity, u: RadialFunction, t: float, h: float = 1e-4) -> float:
    """Centered finite difference of the dilation energy in t (cross-check)."""
    return (dilation_energy(nl, u, t * (1 + h)) - dilation_energy(nl, u, t * (1 - h))) / (2 * t * h)
