"""Shooting for positive radial solutions of -u'' - (N-1)u'/r + mu u = g(u).

Ground states are computed at unit frequency for the rescaled nonlinearity
g_mu (see ``Nonlinearity.scaled``) and mapped back by u = mu^{N/4} w(mu^{1/2} r);
the linear decay rate is then always 1 and one grid serves every mu.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import kv

from .functionals import action as action_functional
from .functionals import residuals
from .grid import ProblemParams, RadialFunction, build_grid, norms
from .nonlinearity import Nonlinearity, power

CROSSES, DECAYS, BLOWS = "CrossesZero", "Decays", "Blows"


class NoSolution(RuntimeError):
    pass


class ConvergenceFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class ShotOutcome:
    s0: float
    classification: str
    r_end: float
    u_end: float
    du_end: float
    r_star: float | None = None
    diagnostic: str = ""
    sol: object = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class SolverOptions:
    rtol: float = 1e-11
    atol_rel: float = 1e-14
    r_start: float = 1e-4      # series start, in units of mu^{-1/2}
    r_max: float = 60.0        # shooting horizon, in units of mu^{-1/2}
    scan_lo: float = 1e-3
    scan_hi: float = 1e4
    scan_per_decade: int = 4
    bisect_rtol: float = 1e-13
    decay_level: float = 1e-5  # graft the linear tail once u < decay_level * u(0)
    Rmax: float = 30.0         # profile grid radius, in units of mu^{-1/2}
    n: int = 4096
    stretch: float = 4.0
    residual_tol: float = 1e-4


DEFAULT_OPTIONS = SolverOptions()


def shoot(nl: Nonlinearity, mu: float, s0: float, rtol: float = 1e-11, atol_rel: float = 1e-14,
          r_start: float = 1e-4, r_max: float = 60.0, dense: bool = False) -> ShotOutcome:
    """Integrate from u(0) = s0, u'(0) = 0 until the first zero, turning point or r_max.

    Radii r_start and r_max are measured in units of mu^{-1/2}.  A turning point with
    u > 0 (undershoot) and an initially non-decreasing profile are both reported as
    Blows; reaching r_max with u small and u'/u near -sqrt(mu) is Decays.
    """
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not s0 > 0:
        raise ValueError(f"s0 must be positive, got {s0}")
    N = nl.params.N
    g = nl.g_scalar
    sq = math.sqrt(mu)
    c = mu * s0 - g(s0)
    if abs(c) <= 1e-13 * mu * s0:
        return ShotOutcome(s0, BLOWS, 0.0, s0, 0.0, diagnostic="stationary start: mu s0 = g(s0)")
    if c > 0:
        return ShotOutcome(s0, BLOWS, 0.0, s0, 0.0, diagnostic="initially increasing")
    r0 = r_start / sq
    y0 = [s0 + c * r0 * r0 / (2 * N), c * r0 / N]
    k = N - 1

    def rhs(r, y):
        u, v = y
        return [v, -k / r * v + mu * u - g(u)]

    def cross(r, y):
        return y[0]

    cross.terminal = True
    cross.direction = -1

    def turn(r, y):
        return y[1]

    turn.terminal = True
    turn.direction = 1

    try:
        sol = solve_ivp(rhs, (r0, r_max / sq), y0, method="DOP853", rtol=rtol, atol=atol_rel * s0,
                        events=[cross, turn], dense_output=dense)
    except (OverflowError, FloatingPointError) as exc:
        return ShotOutcome(s0, BLOWS, float("nan"), float("nan"), float("nan"), diagnostic=f"overflow: {exc}")
    dsol = sol.sol if dense else None
    r_end = float(sol.t[-1])
    u_end, du_end = float(sol.y[0, -1]), float(sol.y[1, -1])
    if sol.status == -1:
        return ShotOutcome(s0, BLOWS, r_end, u_end, du_end, diagnostic=f"integrator: {sol.message}", sol=dsol)
    if sol.t_events[0].size:
        rs = float(sol.t_events[0][0])
        return ShotOutcome(s0, CROSSES, rs, 0.0, du_end, r_star=rs, sol=dsol)
    if sol.t_events[1].size:
        return ShotOutcome(s0, BLOWS, r_end, u_end, du_end, diagnostic="turning point with u > 0", sol=dsol)
    if 0 < u_end < 1e-5 * s0 and abs(du_end / u_end + sq) < 0.2 * sq:
        return ShotOutcome(s0, DECAYS, r_end, u_end, du_end, sol=dsol)
    return ShotOutcome(s0, BLOWS, r_end, u_end, du_end, diagnostic="no event, tail not decaying", sol=dsol)


@dataclass(frozen=True, eq=False)
class GroundState:
    mu: float
    u: RadialFunction
    action: float
    mass: float
    pohozaev_res: float
    nehari_res: float
    s0: float
    branches: tuple = ()
    tail_mismatch: float = 0.0
    warnings: tuple = ()

    @property
    def max_residual(self) -> float:
        return max(abs(self.pohozaev_res), abs(self.nehari_res))

    def summary(self) -> dict:
        return {
            "mu": self.mu, "action": self.action, "mass": self.mass, "u0": self.s0,
            "pohozaev_res": self.pohozaev_res, "nehari_res": self.nehari_res,
            "n_branches": len(self.branches), "warnings": list(self.warnings),
        }


def _classify(nl, s0, opts, rtol=None, dense=False) -> ShotOutcome:
    return shoot(nl, 1.0, s0, rtol=rtol or opts.rtol, atol_rel=opts.atol_rel,
                 r_start=opts.r_start, r_max=opts.r_max, dense=dense)


def _brackets(nlh: Nonlinearity, opts: SolverOptions) -> list[tuple[float, float]]:
    decades = math.log10(opts.scan_hi / opts.scan_lo)
    s = np.logspace(math.log10(opts.scan_lo), math.log10(opts.scan_hi),
                    int(round(decades * opts.scan_per_decade)) + 1)
    crosses = [_classify(nlh, float(x), opts).classification == CROSSES for x in s]
    return [(float(s[i]), float(s[i + 1])) for i in range(s.size - 1) if crosses[i] != crosses[i + 1]]


def _bisect(nlh: Nonlinearity, a: float, b: float, opts: SolverOptions, rtol: float):
    # returns the final (non-crossing, crossing) pair of outcomes with dense output
    ca = _classify(nlh, a, opts, rtol).classification == CROSSES
    lo, hi = (b, a) if ca else (a, b)  # lo: not crossing, hi: crossing
    while abs(hi - lo) > opts.bisect_rtol * max(lo, hi):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _classify(nlh, mid, opts, rtol).classification == CROSSES:
            hi = mid
        else:
            lo = mid
    out_lo = _classify(nlh, lo, opts, rtol, dense=True)
    out_hi = _classify(nlh, hi, opts, rtol, dense=True)
    return out_lo, out_hi


def _tail(N: int, r):
    nu = 0.5 * (N - 2)
    r = np.asarray(r, dtype=float)
    return r ** (-nu) * kv(nu, r), -(r ** (-nu)) * kv(nu + 1, r)


def _assemble(nlh: Nonlinearity, lo: ShotOutcome, hi: ShotOutcome, opts: SolverOptions):
    """Unit-frequency profile on the normalized grid from a converged bracket."""
    params = nlh.params
    N = params.N
    s0 = 0.5 * (lo.s0 + hi.s0)
    r0 = opts.r_start
    r_common = min(lo.r_end if lo.sol is not None else 0.0, hi.r_end)
    probe = np.linspace(r0, r_common, 4000)
    ul = lo.sol(probe)[0]
    uh = hi.sol(probe)[0]
    agree = np.abs(uh - ul) <= 1e-7 * np.abs(ul)
    small = ul <= opts.decay_level * s0
    ok = agree & small
    if not np.any(ok):
        # bracket separates before the decay level; graft where the two shots still agree
        idx = np.nonzero(~agree)[0]
        i_c = max(int(idx[0]) - 1, 1) if idx.size else probe.size - 1
    else:
        i_c = int(np.argmax(ok))
    r_c = float(probe[i_c])
    grid = build_grid(params, opts.Rmax, opts.n, opts.stretch)
    r = grid.nodes
    vals = np.empty_like(r)
    der = np.empty_like(r)
    inner = r <= r_c
    core = inner & (r >= r0)
    y = 0.5 * (lo.sol(r[core]) + hi.sol(r[core]))
    vals[core], der[core] = y[0], y[1]
    seed = r < r0
    c = s0 - nlh.g_scalar(s0)
    vals[seed] = s0 + c * r[seed] ** 2 / (2 * N)
    der[seed] = c * r[seed] / N
    yc = 0.5 * (lo.sol(r_c) + hi.sol(r_c))
    T, dT = _tail(N, np.array([r_c]))
    A = yc[0] / T[0]
    mismatch = abs(yc[1] / yc[0] - dT[0] / T[0])
    out = ~inner
    Tr, dTr = _tail(N, r[out])
    vals[out], der[out] = A * Tr, A * dTr
    return RadialFunction(grid, vals, der), s0, mismatch, r_c


def _physical(w: RadialFunction, mu: float) -> RadialFunction:
    # u(r) = mu^{N/4} w(mu^{1/2} r); the graded grid scales exactly
    g = w.grid
    N = g.N
    grid = build_grid(g.params, g.Rmax / math.sqrt(mu), g.n, g.stretch)
    amp = mu ** (N / 4)
    return RadialFunction(grid, amp * w.values, amp * math.sqrt(mu) * w.deriv)


def _ground_state_unit(nlh: Nonlinearity, opts: SolverOptions):
    brackets = _brackets(nlh, opts)
    if not brackets:
        raise NoSolution(f"no shooting bracket for u(0) in [{opts.scan_lo:g}, {opts.scan_hi:g}]")
    found = []
    problems = []
    for a, b in brackets:
        try:
            lo, hi = _bisect(nlh, a, b, opts, opts.rtol)
            w, s0, mismatch, r_c = _assemble(nlh, lo, hi, opts)
            if mismatch > 0.2:
                # grazing bracket: the tail was not certified, retry with a tighter integrator
                lo, hi = _bisect(nlh, a, b, opts, opts.rtol / 10)
                w, s0, mismatch, r_c = _assemble(nlh, lo, hi, opts)
        except ValueError as exc:
            problems.append(f"bracket ({a:.4g}, {b:.4g}): {exc}")
            continue
        if mismatch > 0.2:
            problems.append(f"bracket ({a:.4g}, {b:.4g}): tail not certified (log-slope mismatch {mismatch:.3g})")
            continue
        if np.any(w.values <= 0):
            problems.append(f"bracket ({a:.4g}, {b:.4g}): nonpositive profile")
            continue
        act = action_functional(nlh, w, 1.0)
        found.append((act, s0, w, mismatch, lo, hi))
    if not found:
        raise NoSolution("; ".join(problems) or "no admissible branch")
    found.sort(key=lambda t: t[0])
    return found, problems


@lru_cache(maxsize=256)
def _cached_ground_state(nl: Nonlinearity, mu: float, opts: SolverOptions) -> GroundState:
    nlh = nl.scaled(mu)
    found, problems = _ground_state_unit(nlh, opts)
    act_hat, s0_hat, w, mismatch, _, _ = found[0]
    u = _physical(w, mu)
    pres, nres = residuals(nl, u, mu)
    warnings = list(problems)
    if len(found) > 1:
        warnings.append(f"{len(found)} positive branches; least action taken (mountain-pass level not verified)")
    gs = GroundState(
        mu=mu,
        u=u,
        action=mu * act_hat,
        mass=norms(u).mass,
        pohozaev_res=pres,
        nehari_res=nres,
        s0=s0_hat * mu ** (nl.params.N / 4),
        branches=tuple((mu * a, s * mu ** (nl.params.N / 4)) for a, s, *_ in found),
        tail_mismatch=mismatch,
        warnings=tuple(warnings),
    )
    if max(abs(pres), abs(nres)) > opts.residual_tol:
        raise ConvergenceFailure(
            f"residuals above tolerance at mu={mu:.6g}: pohozaev={pres:.3e}, nehari={nres:.3e}")
    d = np.diff(u.values)
    if np.any(d > 1e-12 * gs.s0):
        raise ConvergenceFailure(f"ground state at mu={mu:.6g} is not nonincreasing")
    return gs


def find_ground_state(nl: Nonlinearity, mu: float, opts: SolverOptions = DEFAULT_OPTIONS) -> GroundState:
    """Least-action positive solution at frequency mu."""
    if not (mu > 0 and math.isfinite(mu)):
        raise ValueError(f"mu must be positive and finite, got {mu}")
    return _cached_ground_state(nl, float(mu), opts)


_POWERS: dict[int, Nonlinearity] = {}


def power_nl(params: ProblemParams) -> Nonlinearity:
    # one shared instance per dimension so that ground-state caching applies
    if params.N not in _POWERS:
        _POWERS[params.N] = power(params)
    return _POWERS[params.N]


@dataclass(frozen=True)
class M1Estimate:
    N: int
    value: float
    coarse: float
    fine: float
    n: int

    @property
    def richardson_delta(self) -> float:
        return self.value - self.fine

    def as_dict(self) -> dict:
        return {"N": self.N, "m1": self.value, "coarse": self.coarse, "fine": self.fine, "n": self.n,
                "method": "shooting + Simpson, Richardson over n and 2n"}


@lru_cache(maxsize=16)
def m1_estimate(N: int, n: int = 4096) -> M1Estimate:
    params = ProblemParams(N)
    opts = SolverOptions(n=n)
    nlh = power_nl(params)
    found, _ = _ground_state_unit(nlh, opts)
    _, _, w, _, lo, hi = found[0]
    m_coarse = norms(w).mass
    w_fine, *_ = _assemble(nlh, lo, hi, SolverOptions(n=2 * n))
    m_fine = norms(w_fine).mass
    return M1Estimate(N, m_fine + (m_fine - m_coarse) / 15.0, m_coarse, m_fine, n)


def compute_m1(params: ProblemParams) -> float:
    """Critical mass, half the squared L^2 norm of the unit-frequency power ground state."""
    return m1_estimate(params.N).value


def a_of_mu(nl: Nonlinearity, mu: float, opts: SolverOptions = DEFAULT_OPTIONS) -> float:
    return find_ground_state(nl, mu, opts).action


def b_of_lambda(nl: Nonlinearity, lam: float, m: float, opts: SolverOptions = DEFAULT_OPTIONS) -> float:
    """a(e^lam) - e^lam m."""
    mu = math.exp(lam)
    return find_ground_state(nl, mu, opts).action - mu * m


def write_ground_state_csv(gs: GroundState, path) -> Path:
    from .grid import dump_function
    return dump_function(gs.u, path)


def write_scan_csv(rows, path) -> Path:
    """rows of (lambda, mu, b, a, action_residual)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "mu", "b", "a", "action_residual"])
        for row in rows:
            w.writerow([f"{float(x):.17g}" for x in row])
    return path
