"""Zero-mass problem -Delta u = g(u): radial shooting, solvability scans and decay checks.

A scan can only give evidence.  Every verdict carries the label ``GRID_LIMITED``: the
condition being probed quantifies over slowly decaying functions that a truncated
radial grid cannot represent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad, solve_ivp

from .grid import RadialFunction, build_grid, integrate, norms
from .nonlinearity import Nonlinearity, PerturbationXi, perturb
from .shooting import BLOWS, CROSSES, DECAYS, ShotOutcome

INCONCLUSIVE = "Inconclusive"
NO_SOLUTION, CANDIDATE, UNRELIABLE = "NoSolutionFound", "CandidateFound", "Unreliable"
GRID_LIMITED = "numerical, grid-limited"


@dataclass(frozen=True)
class ZeroMassOptions:
    rtol: float = 1e-10
    atol_rel: float = 1e-14
    r_start: float = 1e-4       # series start, in units of the core length (g(s0)/s0)^{-1/2}
    r_cap: float = 1e3          # outer radius, same units
    settle_tol: float = 1e-2    # relative drift of r^{N-2} u over the last doubling
    pohozaev_tol: float = 1e-3
    nonneg_tol: float = 1e-4
    n: int = 4096
    inconclusive_max: float = 0.2


DEFAULT_ZM = ZeroMassOptions()


def core_length(nl: Nonlinearity, s0: float) -> float:
    gs = abs(nl.g_scalar(s0))
    return math.sqrt(s0 / gs) if gs > 0 else math.inf


def zero_mass_shoot(nl: Nonlinearity, q: float | None, s0: float, opts: ZeroMassOptions = DEFAULT_ZM,
                    dense: bool = False) -> ShotOutcome:
    """Integrate u'' + (N-1)u'/r + g(u) = 0 from u(0) = s0 over [0, r_cap * core length].

    Decays needs a positive monotone tail that matches the algebraic profile r^{2-N}
    (N >= 3) or, for N = 2, a small tail obeying the decay bound of ``decay_check``
    uniformly over the last doubling of the radius.  Anything else that reaches the
    outer radius without an event is Inconclusive.
    """
    if not s0 > 0:
        raise ValueError(f"s0 must be positive, got {s0}")
    N = nl.params.N
    q = nl.params.p if q is None else q
    g = nl.g_scalar
    g0 = g(s0)
    if g0 == 0:
        return ShotOutcome(s0, BLOWS, 0.0, s0, 0.0, diagnostic="stationary start: g(s0) = 0")
    if g0 < 0:
        return ShotOutcome(s0, BLOWS, 0.0, s0, 0.0, diagnostic="initially increasing: g(s0) < 0")
    L = math.sqrt(s0 / g0)
    r0, R = opts.r_start * L, opts.r_cap * L
    y0 = [s0 - g0 * r0 * r0 / (2 * N), -g0 * r0 / N]
    k = N - 1

    def rhs(r, y):
        return [y[1], -k / r * y[1] - g(y[0])]

    def cross(r, y):
        return y[0]

    cross.terminal = True
    cross.direction = -1

    def turn(r, y):
        return y[1]

    turn.terminal = True
    turn.direction = 1

    sol = solve_ivp(rhs, (r0, R), y0, method="DOP853", rtol=opts.rtol, atol=opts.atol_rel * s0,
                    events=[cross, turn], dense_output=True)
    dsol = sol.sol if dense else None
    r_end = float(sol.t[-1])
    u_end, du_end = float(sol.y[0, -1]), float(sol.y[1, -1])
    if sol.status == -1:
        return ShotOutcome(s0, INCONCLUSIVE, r_end, u_end, du_end, diagnostic=f"integrator: {sol.message}", sol=dsol)
    if sol.t_events[0].size:
        rs = float(sol.t_events[0][0])
        return ShotOutcome(s0, CROSSES, rs, 0.0, du_end, r_star=rs, sol=dsol)
    if sol.t_events[1].size:
        return ShotOutcome(s0, BLOWS, r_end, u_end, du_end, diagnostic="turning point with u > 0", sol=dsol)
    u_half = float(sol.sol(0.5 * R)[0])
    if N >= 3:
        c_end, c_half = u_end * R ** (N - 2), u_half * (0.5 * R) ** (N - 2)
        slope = R * du_end / u_end
        if abs(c_end - c_half) <= opts.settle_tol * c_end and abs(slope + (N - 2)) < 0.1:
            return ShotOutcome(s0, DECAYS, r_end, u_end, du_end, sol=dsol)
        why = f"tail not algebraic: r u'/u = {slope:.4g}"
    else:
        e = 2 * (N - 1) / (q + 2)
        grow = (u_end * R**e) / (u_half * (0.5 * R) ** e)
        if u_end < 1e-3 * s0 and grow <= 1 + opts.settle_tol:
            return ShotOutcome(s0, DECAYS, r_end, u_end, du_end, sol=dsol)
        why = f"tail too slow: u(R)/s0 = {u_end / s0:.3g}"
    return ShotOutcome(s0, INCONCLUSIVE, r_end, u_end, du_end, diagnostic=why, sol=dsol)


@dataclass(frozen=True, eq=False)
class Candidate:
    height: float
    profile: RadialFunction = field(repr=False)
    ZG: float
    pohozaev_res: float     # |N Z_G - grad2| / grad2
    grad2: float
    accepted: bool
    reason: str = ""


def _tail_integrals(nl: Nonlinearity, R: float, c: float) -> tuple[float, float]:
    # gradient and int G contributions of c r^{2-N} beyond R
    N = nl.params.N
    sig = nl.params.sigmaN
    grad_tail = sig * (N - 2) * c * c * R ** (2 - N)
    f = lambda r: float(nl.G(c * r ** (2 - N))) * r ** (N - 1)
    G_tail = sig * quad(f, R, math.inf, limit=200)[0]
    return grad_tail, G_tail


def build_candidate(nl: Nonlinearity, out: ShotOutcome, opts: ZeroMassOptions = DEFAULT_ZM) -> Candidate:
    """Profile, Z_G and Pohozaev residual of a decaying shot (dense output required)."""
    if out.classification != DECAYS or out.sol is None:
        raise ValueError("a candidate needs a Decays outcome with dense output")
    params = nl.params
    N = params.N
    R = out.r_end
    grid = build_grid(params, R, opts.n)
    r = grid.nodes
    r_lo = float(out.sol.t_min)
    s0 = out.s0
    g0 = nl.g_scalar(s0)
    y = out.sol(np.clip(r, r_lo, R))
    inner = r < r_lo
    vals, der = y[0].copy(), y[1].copy()
    vals[inner] = s0 - g0 * r[inner] ** 2 / (2 * N)
    der[inner] = -g0 * r[inner] / N
    u = RadialFunction(grid, vals, der)
    nm = norms(u)
    grad2 = nm.grad2
    intG = integrate(grid, nl.G(vals))
    if N >= 3:
        gt, Gt = _tail_integrals(nl, R, out.u_end * R ** (N - 2))
        grad2 += gt
        intG += Gt
    ZG = 0.5 * grad2 - intG
    res = abs(N * ZG - grad2) / grad2
    reasons = []
    if res > opts.pohozaev_tol:
        reasons.append(f"Pohozaev residual {res:.3g}")
    if ZG < -opts.nonneg_tol * grad2:
        reasons.append(f"negative Z_G {ZG:.3g}")
    return Candidate(s0, u, ZG, res, grad2, not reasons, "; ".join(reasons))


@dataclass(frozen=True, eq=False)
class ZeroMassScan:
    q: float
    heights: np.ndarray
    outcomes: tuple
    candidates: tuple
    rejected: tuple
    verdict_g2: str
    level: float | None
    beta_cap: float
    inconclusive_fraction: float
    label: str = GRID_LIMITED

    def summary(self) -> dict:
        counts = {}
        for o in self.outcomes:
            counts[o.classification] = counts.get(o.classification, 0) + 1
        return {
            "q": self.q, "verdict_g2": self.verdict_g2, "level": self.level,
            "beta_cap": self.beta_cap if math.isfinite(self.beta_cap) else "inf",
            "n_heights": int(self.heights.size), "classification_counts": counts,
            "n_candidates": len(self.candidates), "n_rejected": len(self.rejected),
            "inconclusive_fraction": self.inconclusive_fraction, "label": self.label,
        }


def default_heights(n: int = 40, lo: float = -3.0, hi: float = 3.0) -> np.ndarray:
    return np.logspace(lo, hi, n)


def g2_scan(nl: Nonlinearity, q: float | None = None, beta_cap: float = math.inf, height_grid=None,
            opts: ZeroMassOptions = DEFAULT_ZM) -> ZeroMassScan:
    """Shoot from every height; decaying shots become candidates after the Pohozaev filter."""
    q = nl.params.p if q is None else float(q)
    hs = default_heights() if height_grid is None else np.sort(np.asarray(height_grid, dtype=float))
    if hs.size < 2 or np.any(hs <= 0):
        raise ValueError("height_grid must hold at least two positive heights")
    if math.log10(hs[-1] / hs[0]) < 6 - 1e-9:
        raise ValueError("height_grid must span at least 6 decades")
    outcomes, cands, rejected = [], [], []
    for s0 in hs:
        out = zero_mass_shoot(nl, q, float(s0), opts, dense=True)
        if out.classification == DECAYS:
            c = build_candidate(nl, out, opts)
            (cands if c.accepted else rejected).append(c)
        outcomes.append(ShotOutcome(out.s0, out.classification, out.r_end, out.u_end, out.du_end,
                                    out.r_star, out.diagnostic))
    frac = sum(o.classification == INCONCLUSIVE for o in outcomes) / len(outcomes)
    below = [c for c in cands if c.ZG <= beta_cap]
    level = min(c.ZG for c in below) if below else None
    if frac > opts.inconclusive_max:
        verdict = UNRELIABLE
    else:
        verdict = CANDIDATE if below else NO_SOLUTION
    return ZeroMassScan(q, hs, tuple(outcomes), tuple(cands), tuple(rejected), verdict, level,
                        float(beta_cap), frac)


@dataclass(frozen=True)
class DecayCheck:
    holds: bool
    C_est: float
    C_half: float
    C_theory: float
    tail_exponent: float | None = None   # fitted r^{-k} continuation beyond the grid, if any

    @property
    def within_theory(self) -> bool:
        return self.C_est <= self.C_theory * (1 + 1e-6)


def decay_constant(N: int, q: float, sigmaN: float) -> float:
    """Constant of |u(R)| <= C R^{-2(N-1)/(q+2)} (int_ext |u|^q)^{1/(q+2)} (int_ext |grad u|^2)^{1/(q+2)}."""
    return ((q + 2) / (2 * sigmaN)) ** (2 / (q + 2))


def decay_check(u: RadialFunction, q: float | None = None, stable_tol: float = 1e-2) -> DecayCheck:
    """Largest constant in the pointwise decay bound, integrals taken outside B_R.

    If u does not vanish at the outer radius it is continued by c r^{-k} with k fitted
    from the last node; a continuation that is not integrable gives C_est = inf.
    C_est is the maximum over the full window, C_half over its inner half; the check
    holds when C_est is finite and does not grow when the window is doubled.
    """
    params = u.grid.params
    N = params.N
    q = params.p if q is None else float(q)
    Ct = decay_constant(N, q, params.sigmaN)
    sig = params.sigmaN
    r = u.r
    v = np.abs(u.values)
    du = u.derivative()
    w = sig * r ** (N - 1)
    # exterior integrals from each node to the outer radius
    ext_q = np.abs(cumulative_trapezoid((w * v**q)[::-1], r[::-1], initial=0.0)[::-1])
    ext_g = np.abs(cumulative_trapezoid((w * du**2)[::-1], r[::-1], initial=0.0)[::-1])
    k = None
    R, vR = r[-1], v[-1]
    if vR > 0:
        k = float(-R * du[-1] / u.values[-1])
        if not (k * q > N and 2 * k + 2 > N):
            return DecayCheck(False, math.inf, math.inf, Ct, k)
        ext_q = ext_q + sig * vR**q * R**N / (k * q - N)
        ext_g = ext_g + sig * (k * vR) ** 2 * R ** (N - 2) / (2 * k + 2 - N)
    e = 2 * (N - 1) / (q + 2)
    denom = (ext_q * ext_g) ** (1 / (q + 2))
    ok = (r > 0) & (v > 0) & (denom > 0)
    if not np.any(ok):
        return DecayCheck(True, 0.0, 0.0, Ct, k)
    C = np.zeros_like(r)
    C[ok] = v[ok] * r[ok] ** e / denom[ok]
    half = r <= 0.5 * u.grid.Rmax
    C_full = float(np.max(C))
    C_half = float(np.max(C[half])) if np.any(half) else 0.0
    holds = math.isfinite(C_full) and C_full <= (1 + stable_tol) * C_half
    return DecayCheck(bool(holds), C_full, C_half, Ct, k)


@dataclass(frozen=True)
class StabilityRow:
    eps: float
    verdict: str
    n_candidates: int
    level: float | None
    inconclusive_fraction: float
    rerun_verdict: str | None = None


@dataclass(frozen=True)
class StabilityTable:
    rows: tuple
    largest_eps_no_solution: float | None
    monotone: bool
    baseline_verdict: str
    label: str = GRID_LIMITED

    def summary(self) -> dict:
        return {
            "baseline_verdict": self.baseline_verdict,
            "largest_eps_no_solution": self.largest_eps_no_solution,
            "monotone": self.monotone, "label": self.label,
            "rows": [{"eps": r.eps, "verdict": r.verdict, "n_candidates": r.n_candidates, "level": r.level,
                      "inconclusive_fraction": r.inconclusive_fraction, "rerun_verdict": r.rerun_verdict}
                     for r in self.rows],
        }


def stability_experiment(nl_base: Nonlinearity, xi: PerturbationXi, eps_list, beta_cap: float = math.inf,
                         height_grid=None, opts: ZeroMassOptions = DEFAULT_ZM) -> StabilityTable:
    """g2_scan of G + eps Xi for each eps in a decreasing list.

    A NoSolutionFound at some eps followed by a failure at a smaller eps breaks the
    expected monotonicity; such rows are rerun on a height grid of double density.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    hs = default_heights() if height_grid is None else np.asarray(height_grid, dtype=float)
    base = g2_scan(nl_base, None, beta_cap, hs, opts)
    if base.verdict_g2 != NO_SOLUTION:
        raise ValueError(f"baseline scan must give {NO_SOLUTION}, got {base.verdict_g2}")
    scans = [g2_scan(perturb(nl_base, xi, e), None, beta_cap, hs, opts) for e in eps_list]
    verdicts = [s.verdict_g2 for s in scans]
    rows = []
    monotone = True
    dense_hs = np.logspace(math.log10(hs.min()), math.log10(hs.max()), 2 * hs.size)
    for i, (e, s) in enumerate(zip(eps_list, scans)):
        rerun = None
        larger_ok = any(v == NO_SOLUTION for v in verdicts[:i])
        if s.verdict_g2 != NO_SOLUTION and larger_ok:
            monotone = False
            rerun = g2_scan(perturb(nl_base, xi, e), None, beta_cap, dense_hs, opts).verdict_g2
        rows.append(StabilityRow(e, s.verdict_g2, len(s.candidates), s.level, s.inconclusive_fraction, rerun))
    good = [r.eps for r in rows if r.verdict == NO_SOLUTION]
    return StabilityTable(tuple(rows), max(good) if good else None, monotone, base.verdict_g2)


def write_scan_csv(scan: ZeroMassScan, path) -> Path:
    path = Path(path)
    by_height = {c.height: c for c in scan.candidates + scan.rejected}
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s0", "classification", "ZG", "pohozaev_res"])
        for o in scan.outcomes:
            c = by_height.get(o.s0)
            zg = f"{c.ZG:.17g}" if c else "nan"
            pr = f"{c.pohozaev_res:.17g}" if c else "nan"
            w.writerow([f"{o.s0:.17g}", o.classification, zg, pr])
    return path
