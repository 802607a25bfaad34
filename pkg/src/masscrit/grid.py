"""Radial discretization of R^N: graded grids, weighted quadrature, norms, scalings."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma


@dataclass(frozen=True)
class ProblemParams:
    """Dimension and the mass-critical exponent p = 1 + 4/N."""

    N: int = 2

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < 2:
            raise ValueError(f"dimension N must be an integer >= 2, got {self.N!r}")

    @property
    def p_exact(self) -> Fraction:
        return 1 + Fraction(4, self.N)

    @property
    def p(self) -> float:
        return float(self.p_exact)

    @property
    def sigmaN(self) -> float:
        # surface measure of the unit sphere S^{N-1}
        return 2.0 * math.pi ** (self.N / 2) / gamma(self.N / 2)

    @property
    def two_star(self) -> float:
        if self.N <= 2:
            return math.inf
        return 2.0 * self.N / (self.N - 2)


def _simpson_weights(n: int) -> np.ndarray:
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Graded nodes r_i = Rmax (a x_i + (1 - a) x_i^2) with a = 1/stretch, x uniform.

    ``n`` is the number of subintervals (must be even); there are n + 1 nodes.
    Weights are composite Simpson in x, folded with dr/dx and sigmaN r^{N-1}.
    """

    params: ProblemParams
    Rmax: float
    n: int
    stretch: float
    x: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    jac: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    def refined(self, factor: int = 2) -> "RadialGrid":
        return build_grid(self.params, self.Rmax, self.n * factor, self.stretch)

    def integrate(self, f) -> float:
        return integrate(self, f)

    def ball_volume(self) -> float:
        return self.params.sigmaN * self.Rmax**self.N / self.N


def build_grid(params: ProblemParams, Rmax: float = 30.0, n: int = 4096, stretch: float = 4.0) -> RadialGrid:
    for name, val in (("Rmax", Rmax), ("stretch", stretch)):
        if not np.isfinite(val):
            raise ValueError(f"{name} must be finite, got {val}")
    if Rmax <= 0:
        raise ValueError(f"Rmax must be positive, got {Rmax}")
    if stretch < 1:
        raise ValueError(f"stretch must be >= 1, got {stretch}")
    if int(n) != n or n < 64:
        raise ValueError(f"n must be an integer >= 64, got {n}")
    n = int(n)
    if n % 2:
        raise ValueError(f"composite Simpson needs an even number of subintervals, got {n}")
    a = 1.0 / stretch
    x = np.linspace(0.0, 1.0, n + 1)
    nodes = Rmax * (a * x + (1.0 - a) * x * x)
    jac = Rmax * (a + 2.0 * (1.0 - a) * x)
    weights = _simpson_weights(n) / n * jac * params.sigmaN * nodes ** (params.N - 1)
    for arr in (x, nodes, jac, weights):
        arr.setflags(write=False)
    return RadialGrid(params, float(Rmax), n, float(stretch), x, nodes, jac, weights)


def integrate(grid: RadialGrid, f) -> float:
    """Integral over the ball of radius Rmax of the radial function with nodal values f."""
    f = np.asarray(f, dtype=float)
    if f.shape != grid.nodes.shape:
        raise ValueError(f"expected {grid.nodes.size} nodal values, got shape {f.shape}")
    return float(np.dot(grid.weights, f))


@dataclass(frozen=True, eq=False)
class RadialFunction:
    """Nodal values of a radial function; ``deriv`` holds u'(r) when known exactly."""

    grid: RadialGrid
    values: np.ndarray
    deriv: np.ndarray | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.nodes.shape:
            raise ValueError(f"expected {self.grid.nodes.size} nodal values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("radial function has non-finite nodal values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.deriv is not None:
            d = np.array(self.deriv, dtype=float)
            if d.shape != vals.shape:
                raise ValueError("derivative array does not match the grid")
            d.setflags(write=False)
            object.__setattr__(self, "deriv", d)

    @classmethod
    def from_callable(cls, grid: RadialGrid, f, df=None) -> "RadialFunction":
        r = grid.nodes
        return cls(grid, f(r), None if df is None else df(r))

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def derivative(self) -> np.ndarray:
        if self.deriv is not None:
            return self.deriv
        return radial_derivative(self.grid, self.values)

    def __call__(self, r) -> np.ndarray:
        return interpolate(self, r)

    def with_values(self, values, deriv=None) -> "RadialFunction":
        return RadialFunction(self.grid, values, deriv)

    def __mul__(self, c: float) -> "RadialFunction":
        return RadialFunction(self.grid, c * self.values, None if self.deriv is None else c * self.deriv)

    __rmul__ = __mul__


def radial_derivative(grid: RadialGrid, values: np.ndarray) -> np.ndarray:
    """Second-order centered differences in the mapped coordinate, one-sided at the ends."""
    du = np.gradient(np.asarray(values, dtype=float), grid.x, edge_order=2) / grid.jac
    du[0] = 0.0
    return du


@dataclass(frozen=True)
class Norms:
    mass: float    # (1/2) ||u||_2^2
    grad2: float   # ||grad u||_2^2
    lp1: float     # ||u||_{p+1}^{p+1}
    sup: float     # ||u||_inf

    def as_dict(self) -> dict:
        return {"mass": self.mass, "grad2": self.grad2, "lp1": self.lp1, "sup": self.sup}


def norms(u: RadialFunction) -> Norms:
    g = u.grid
    v = u.values
    du = u.derivative()
    p = g.params.p
    return Norms(
        mass=0.5 * integrate(g, v * v),
        grad2=integrate(g, du * du),
        lp1=integrate(g, np.abs(v) ** (p + 1)),
        sup=float(np.max(np.abs(v))) if v.size else 0.0,
    )


def tail_mass(u: RadialFunction, frac: float = 0.9) -> float:
    """Mass of u beyond frac * Rmax; a proxy for truncation error."""
    g = u.grid
    mask = g.nodes >= frac * g.Rmax
    return 0.5 * float(np.dot(g.weights[mask], u.values[mask] ** 2))


def interpolate(u: RadialFunction, r) -> np.ndarray:
    """Monotone cubic interpolation of u at radii r; zero beyond Rmax."""
    r = np.abs(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    inside = r <= u.grid.Rmax
    if np.any(inside):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):   # underflowed tail slopes
            out[inside] = PchipInterpolator(u.grid.nodes, u.values, extrapolate=False)(r[inside])
    return out


def _resample(u: RadialFunction, amp: float, scale: float, target: RadialGrid | None) -> RadialFunction:
    # returns amp * u(scale * r) on the target grid
    grid = u.grid if target is None else target
    r = grid.nodes
    vals = amp * interpolate(u, scale * r)
    deriv = None
    if u.deriv is not None:
        rr = np.abs(scale * r)
        d = np.zeros_like(rr)
        inside = rr <= u.grid.Rmax
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            d[inside] = PchipInterpolator(u.grid.nodes, u.deriv, extrapolate=False)(rr[inside])
        deriv = amp * scale * d
    return RadialFunction(grid, vals, deriv)


def rescale_mu(u: RadialFunction, mu: float, target: RadialGrid | None = None) -> RadialFunction:
    """mu^{N/4} u(mu^{1/2} r): the L^2-isometric frequency scaling."""
    if not (mu > 0 and np.isfinite(mu)):
        raise ValueError(f"mu must be a positive finite number, got {mu}")
    if mu == 1.0 and target is None:
        return u
    N = u.grid.N
    return _resample(u, mu ** (N / 4), math.sqrt(mu), target)


def dilate_mass_preserving(u: RadialFunction, t: float, target: RadialGrid | None = None) -> RadialFunction:
    """t^{1/2} u(t^{1/2} r) for N = 2; keeps ||u||_2 fixed."""
    if u.grid.N != 2:
        raise ValueError("dilate_mass_preserving is defined for N = 2 only")
    if not (t > 0 and np.isfinite(t)):
        raise ValueError(f"dilation t must be positive, got {t}")
    if t == 1.0 and target is None:
        return u
    return _resample(u, math.sqrt(t), math.sqrt(t), target)


def write_profile_csv(path, r, u) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "u"])
        for ri, ui in zip(np.asarray(r), np.asarray(u)):
            w.writerow([f"{float(ri):.17g}", f"{float(ui):.17g}"])
    return path


def read_profile_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def dump_function(u: RadialFunction, path) -> Path:
    return write_profile_csv(path, u.grid.nodes, u.values)
