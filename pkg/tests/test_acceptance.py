"""End-to-end acceptance checks, one test per criterion.

Each test records a "CRITERION k: PASS|FAIL ..." line that is printed in the terminal
summary, then asserts.  Run alone with ``pytest tests/test_acceptance.py -s``.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from masscrit.flow import CONCENTRATING, FlowOptions, best_of_seeds, legendre_check, minimize_d, default_seeds
from masscrit.functionals import gn_check
from masscrit.grid import ProblemParams, RadialFunction, build_grid, norms, rescale_mu
from masscrit.minimax import beta_of, leps_experiment, plateau_level, scan_b
from masscrit.nonlinearity import (bump_family, make_g2_example, make_profile_a, make_two_scale,
                                   min_admissible_ell, plateau_power, power, rho_family, upsilon)
from masscrit.shooting import SolverOptions, b_of_lambda, compute_m1, find_ground_state, power_nl
from masscrit.zeromass import NO_SOLUTION, g2_scan, stability_experiment

pytestmark = pytest.mark.acceptance

P2 = ProblemParams(2)
FLOW = FlowOptions(max_iter=20000)
MU_GRID = np.logspace(-2, 2, 25)


def record(k: int, ok: bool, detail: str, t0: float):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail} ({time.perf_counter() - t0:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def m1_of(N: int) -> float:
    return compute_m1(ProblemParams(N))


@pytest.fixture(scope="module")
def bump_scans():
    # shared by the sign dichotomy and the d = inf b comparison
    m1 = m1_of(2)
    return {sign: scan_b(bump_family(P2, 0.5, sign), m1, (-6.0, 6.0), 25, m1=m1) for sign in (1, -1)}


def test_criterion_1_power_scaling():
    t0 = time.perf_counter()
    worst = 0.0
    for N in (2, 3, 4):
        P = ProblemParams(N)
        m1 = m1_of(N)
        for mu in (0.25, 1.0, 4.0):
            gs = find_ground_state(power_nl(P), mu)
            nm = norms(gs.u)
            rels = [
                2 * nm.mass / (2 * m1) - 1,
                nm.grad2 / (mu * N * m1) - 1,
                nm.lp1 / (mu * (N + 2) * m1) - 1,
                gs.action / (mu * m1) - 1,
            ]
            worst = max(worst, max(abs(x) for x in rels))
    record(1, worst <= 1e-4, f"max relative deviation {worst:.2e} (tol 1e-4)", t0)


def test_criterion_2_power_level_vanishes():
    t0 = time.perf_counter()
    m1 = m1_of(2)
    lams = np.linspace(-4.0, 4.0, 25)
    ratios = [abs(b_of_lambda(power_nl(P2), float(lam), m1)) / (math.exp(lam) * m1) for lam in lams]
    worst = max(ratios)
    record(2, worst <= 1e-3, f"max |b|/(e^lam m1) = {worst:.2e} over 25 samples (tol 1e-3)", t0)


def test_criterion_3_plateau_level():
    t0 = time.perf_counter()
    worst = 0.0
    for N in (2, 3, 4):
        P = ProblemParams(N)
        m1 = m1_of(N)
        for alpha in (-0.3, 0.3):
            a1 = find_ground_state(plateau_power(P, alpha), 1.0).action
            worst = max(worst, abs(a1 * (1 + alpha) ** (2 / (P.p - 1)) / m1 - 1))
    record(3, worst <= 1e-4, f"max relative deviation {worst:.2e} (tol 1e-4)", t0)


def test_criterion_4_plateau_width_trend():
    t0 = time.perf_counter()
    parts, ok = [], True
    for alpha in (-0.3, 0.3):
        devs = [r.deviation for r in leps_experiment(alpha, [2.0, 8.0, 32.0], P2)]
        ok &= all(b < a for a, b in zip(devs, devs[1:]))
        parts.append(f"alpha={alpha:+.1f}: " + " > ".join(f"{d:.2e}" for d in devs))
    record(4, ok, "; ".join(parts), t0)


def test_criterion_5_two_scale_example():
    t0 = time.perf_counter()
    m1 = m1_of(2)
    a1 = make_profile_a(-0.3, 2.0, P2)
    a2 = make_profile_a(0.3, 2.0, P2)
    ell = min_admissible_ell(a1, a2, 2) + 1.0
    nl = make_two_scale(a1, a2, ell, P2)
    b0 = beta_of(nl, 0.0, m1)
    bl = beta_of(nl, ell, m1)
    # solver noise: change of each beta under grid doubling, and the spread of the pure
    # power (whose exact value is m1) at the same frequencies
    fine = SolverOptions(n=8192)
    noise = max(abs(beta_of(nl, 0.0, m1, fine) - b0), abs(beta_of(nl, ell, m1, fine) - bl),
                abs(beta_of(power_nl(P2), 0.0, m1) - m1), abs(beta_of(power_nl(P2), ell, m1) - m1), 1e-14 * m1)
    margin = min(b0 - m1, m1 - bl)
    scan = scan_b(nl, m1, (-6.0, ell + 6.0), 25, m1=m1)
    ok = b0 > m1 > bl and margin >= 5 * noise and scan.case_tag == "i"
    record(5, ok, f"beta(0)={b0:.6f} > m1={m1:.6f} > beta(ell)={bl:.6f}, margin {margin:.3e} "
                  f"vs 5*noise {5 * noise:.1e}, case {scan.case_tag}", t0)


def test_criterion_6_sign_dichotomy(bump_scans):
    t0 = time.perf_counter()
    m1 = m1_of(2)
    fine = SolverOptions(n=8192)
    tags, refined = {}, {}
    for sign in (1, -1):
        tags[sign] = bump_scans[sign].case_tag
        refined[sign] = scan_b(bump_family(P2, 0.5, sign), m1, (-6.0, 6.0), 49, fine, m1=m1).case_tag
    ok = tags[1] == refined[1] == "iii" and tags[-1] == refined[-1] == "ii"
    record(6, ok, f"G>=G0: case {tags[1]} (refined {refined[1]}); G<=G0: case {tags[-1]} "
                  f"(refined {refined[-1]})", t0)


def test_criterion_7_minimum_equals_level_infimum(bump_scans):
    t0 = time.perf_counter()
    m1 = m1_of(2)
    best, _ = best_of_seeds(bump_family(P2, 0.5, 1), m1, FLOW)
    b_low = bump_scans[1].b_lower
    gap = abs(best.d_estimate - b_low)
    tol = max(1e-3 * abs(best.d_estimate), 1e-4 * m1)
    record(7, gap <= tol, f"d={best.d_estimate:.10f} ({best.verdict}), inf b={b_low:.10f}, "
                          f"gap {gap:.2e} (tol {tol:.2e})", t0)


def test_criterion_8_legendre_relation():
    t0 = time.perf_counter()
    m1 = m1_of(2)
    parts, ok = [], True
    for label, nl in (("power", power_nl(P2)), ("bump", bump_family(P2, 0.5, 1))):
        res = legendre_check(nl, m1, MU_GRID, FLOW)
        ok &= res.gap <= res.tolerance
        parts.append(f"{label}: d={res.lhs:.6e}, inf={res.rhs:.6e}, gap {res.gap:.1e} (tol {res.tolerance:.1e})")
    record(8, ok, "; ".join(parts), t0)


def test_criterion_9_non_attainment():
    t0 = time.perf_counter()
    m1 = m1_of(2)
    alpha = 0.5
    seed = default_seeds(P2, m1)["ground_state_shape"]
    rep = minimize_d(rho_family(P2, alpha), m1, seed, FLOW)
    lo, hi = -alpha * m1 * 1.02, -alpha * m1 * 0.98
    ok = rep.verdict == CONCENTRATING and lo <= rep.d_estimate <= hi
    record(9, ok, f"energy {rep.d_estimate:.5f} in [{lo:.5f}, {hi:.5f}], verdict {rep.verdict}, "
                  f"sup x{rep.sup_growth:.3g}, inner mass {rep.inner_mass_fraction:.3f}", t0)


def test_criterion_10_zero_mass_power():
    t0 = time.perf_counter()
    parts, ok = [], True
    for N in (2, 3, 4):
        scan = g2_scan(power(ProblemParams(N)))
        ok &= scan.verdict_g2 == NO_SOLUTION and scan.inconclusive_fraction <= 0.2 and scan.heights.size == 40
        parts.append(f"N={N}: {scan.verdict_g2}, inconclusive {scan.inconclusive_fraction:.2f}")
    record(10, ok, "; ".join(parts), t0)


def test_criterion_11_stability():
    t0 = time.perf_counter()
    P = ProblemParams(3)
    eps_list = [0.1, 0.03, 0.01]
    table = stability_experiment(make_g2_example(P, 0.0), upsilon(P), eps_list)
    verdicts = {r.eps: r.verdict for r in table.rows}
    ok = table.baseline_verdict == NO_SOLUTION and all(verdicts[e] == NO_SOLUTION for e in eps_list[-2:])
    record(11, ok, f"baseline {table.baseline_verdict}; " +
           ", ".join(f"eps={e:g}: {verdicts[e]}" for e in eps_list), t0)


def test_criterion_12_property_suites():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240607)
    m1 = m1_of(2)
    checks = {}

    # flow: mass per projection and monotone energy, on three nonlinearities
    seed = default_seeds(P2, m1)["ground_state_shape"]
    opts = FlowOptions(max_iter=3000)
    reps = [minimize_d(nl, m1, seed, opts) for nl in (bump_family(P2, 0.5, 1), rho_family(P2, 0.5), power_nl(P2))]
    checks["mass"] = max(r.mass_error_max for r in reps) <= 1e-13
    checks["monotone"] = all(r.energy_monotone for r in reps)

    # identity residuals on every accepted solution produced here
    res = []
    for N in (2, 3, 4):
        for nl in (power_nl(ProblemParams(N)), bump_family(ProblemParams(N), 0.5, 1),
                   bump_family(ProblemParams(N), 0.5, -1)):
            for mu in (0.25, 1.0, 4.0):
                res.append(find_ground_state(nl, mu).max_residual)
    checks["residuals"] = max(res) <= 1e-4

    # Gagliardo-Nirenberg on 100 random inputs with mass below m1
    grid = build_grid(P2, 40.0, 4096)
    r = grid.nodes
    gn_ok = True
    for _ in range(100):
        a = rng.uniform(0.2, 5.0, size=3)
        c = rng.normal(size=3)
        v = np.abs(sum(ci * np.exp(-ai * r * r) for ai, ci in zip(a, c))) + 1e-300
        u = RadialFunction(grid, v)
        u = RadialFunction(grid, v * math.sqrt(rng.uniform(0.0, 1.0) * m1 / norms(u).mass))
        gn_ok &= gn_check(u, m1).holds
    checks["gn"] = bool(gn_ok)

    # rescale_mu is an L^2 isometry
    g = build_grid(P2, 60.0, 4096)
    u = RadialFunction.from_callable(g, lambda x: np.exp(-0.5 * x * x))
    iso = max(abs(norms(rescale_mu(u, mu)).mass / norms(u).mass - 1) for mu in rng.uniform(0.1, 10.0, 20))
    checks["isometry"] = iso <= 1e-6

    ok = all(checks.values())
    record(12, ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
           + f" (max residual {max(res):.1e}, isometry {iso:.1e})", t0)
