"""Scans of the mass-shifted level b(lam) = a(e^lam) - e^lam m and the beta experiments.

Only inf_lam b and sup_lam b are estimated.  The two-dimensional minimax level that
sup_lam b bounds from below is not computed; every report says so.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import ProblemParams
from .nonlinearity import Nonlinearity, default_sample, make_profile_a, profile_nonlinearity
from .shooting import (DEFAULT_OPTIONS, ConvergenceFailure, NoSolution, SolverOptions, b_of_lambda,
                       compute_m1)

CASES = ("i", "ii", "iii", "iv")
UPPER_LEVEL_NOTE = "sup_lam b(lam) reported; the cylinder minimax level is bracketed from below only"


@dataclass(frozen=True)
class LevelScan:
    samples: tuple            # (lam, b) pairs that were computed
    b_lower: float
    b_tilde: float
    lam_lower: float
    lam_tilde: float
    case_tag: str
    band: float
    m: float
    m1: float
    A_bar: float
    excluded: tuple = ()      # (lam, reason) pairs without a ground state
    refined: tuple = ()       # (lam, b) pairs added by the extremum search
    notes: tuple = (UPPER_LEVEL_NOTE,)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def values(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])

    @property
    def lower_band_ok(self) -> bool:
        return self.b_lower >= -2.0 * self.A_bar * self.m1 - self.band

    def summary(self) -> dict:
        return {
            "b_lower": self.b_lower,
            "b_tilde": self.b_tilde,
            "case_tag": self.case_tag,
            "lam_lower": self.lam_lower,
            "lam_tilde": self.lam_tilde,
            "zero_band": self.band,
            "A_bar": self.A_bar,
            "lower_band_ok": self.lower_band_ok,
            "n_samples": len(self.samples),
            "n_excluded": len(self.excluded),
            "notes": list(self.notes),
        }


def classify_case(b_lower: float, b_tilde: float, band: float) -> str:
    lower_zero = b_lower >= -band
    upper_zero = b_tilde <= band
    if lower_zero and upper_zero:
        return "iv"
    if lower_zero:
        return "ii"
    if upper_zero:
        return "iii"
    return "i"


def sampled_A_bar(nl: Nonlinearity, sample=None) -> float:
    """sup |H(s)|/s^2 over a log sample."""
    s = default_sample() if sample is None else np.asarray(sample, dtype=float)
    return float(np.max(np.abs(nl.H(s)) / (s * s)))


def _safe_b(nl, lam, m, opts):
    try:
        return b_of_lambda(nl, lam, m, opts), None
    except (NoSolution, ConvergenceFailure) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _golden(f, a: float, b: float, tol: float, sign: float):
    # minimizes sign * f on [a, b]; returns (lam, value) of the best point seen
    seen = {}

    def obj(x):
        v = f(x)
        seen[x] = v
        return math.inf if v is None else sign * v

    minimize_scalar(obj, bounds=(a, b), method="bounded", options={"xatol": tol})
    good = [(x, v) for x, v in seen.items() if v is not None]
    if not good:
        return None
    return min(good, key=lambda t: sign * t[1])


def scan_b(nl: Nonlinearity, m: float, lambda_range=(-6.0, 6.0), n_samples: int = 25,
           opts: SolverOptions = DEFAULT_OPTIONS, m1: float | None = None,
           refine_tol: float = 1e-3) -> LevelScan:
    lo, hi = lambda_range
    if not hi > lo:
        raise ValueError("lambda_range must be increasing")
    if n_samples < 25:
        raise ValueError("n_samples must be at least 25")
    if m1 is None:
        m1 = compute_m1(nl.params)
    band = 1e-3 * m1
    lams = np.linspace(lo, hi, n_samples)
    samples, excluded = [], []
    for lam in lams:
        b, why = _safe_b(nl, float(lam), m, opts)
        if b is None:
            excluded.append((float(lam), why))
        else:
            samples.append((float(lam), float(b)))
    if not samples:
        raise NoSolution("no lambda sample produced a ground state")
    lv = np.array([s[0] for s in samples])
    bv = np.array([s[1] for s in samples])
    f = lambda x: _safe_b(nl, x, m, opts)[0]
    refined = []
    extrema = {}
    for name, sign in (("lower", 1.0), ("tilde", -1.0)):
        i = int(np.argmin(sign * bv))
        best = (float(lv[i]), float(bv[i]))
        if abs(bv[i]) > band:
            a = float(lv[max(i - 1, 0)])
            b_ = float(lv[min(i + 1, lv.size - 1)])
            res = _golden(f, a, b_, refine_tol, sign)
            if res is not None:
                refined.append(res)
                if sign * res[1] < sign * best[1]:
                    best = res
        extrema[name] = best
    (lam_l, b_l), (lam_t, b_t) = extrema["lower"], extrema["tilde"]
    return LevelScan(
        samples=tuple(samples), b_lower=b_l, b_tilde=b_t, lam_lower=lam_l, lam_tilde=lam_t,
        case_tag=classify_case(b_l, b_t, band), band=band, m=m, m1=m1,
        A_bar=sampled_A_bar(nl), excluded=tuple(excluded), refined=tuple(refined),
    )


def beta_of(nl: Nonlinearity, lam: float, m1: float | None = None,
            opts: SolverOptions = DEFAULT_OPTIONS) -> float:
    """Unit-frequency mountain-pass level of the rescaled profile: b(lam)/e^lam + m1."""
    if nl.kind not in ("perturbed_power", "power"):
        raise ValueError(f"beta is defined for perturbed powers, got kind {nl.kind!r}")
    if m1 is None:
        m1 = compute_m1(nl.params)
    mu = math.exp(lam)
    return b_of_lambda(nl, lam, m1, opts) / mu + m1


def plateau_level(params: ProblemParams, alpha: float, m1: float | None = None) -> float:
    """(1+alpha)^{-2/(p-1)} m1, the level of the exact (1+alpha)-power."""
    if m1 is None:
        m1 = compute_m1(params)
    return (1 + alpha) ** (-2 / (params.p - 1)) * m1


@dataclass(frozen=True)
class LepsRow:
    L: float
    beta: float
    target: float
    deviation: float


def leps_experiment(alpha: float, L_list, params: ProblemParams, mollify_eps: float | None = None,
                    opts: SolverOptions = DEFAULT_OPTIONS) -> list[LepsRow]:
    """|beta(a; 0) - (1+alpha)^{-2/(p-1)} m1| for plateau profiles of growing width."""
    Ls = [float(L) for L in L_list]
    if any(b <= a for a, b in zip(Ls, Ls[1:])):
        raise ValueError("L_list must be increasing")
    m1 = compute_m1(params)
    target = plateau_level(params, alpha, m1)
    rows = []
    for L in Ls:
        prof = make_profile_a(alpha, L, params, mollify_eps)
        beta = beta_of(profile_nonlinearity(prof, params), 0.0, m1, opts)
        rows.append(LepsRow(L, beta, target, abs(beta - target)))
    return rows


def write_scan_csv(scan: LevelScan, path) -> Path:
    path = Path(path)
    rows = sorted(list(scan.samples) + list(scan.refined))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "b", "beta"])
        for lam, b in rows:
            w.writerow([f"{lam:.17g}", f"{b:.17g}", f"{b / math.exp(lam) + scan.m1:.17g}"])
    return path
