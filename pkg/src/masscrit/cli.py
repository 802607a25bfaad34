"""Command-line entry point: one subcommand per experiment plus ``validate``.

Every run writes summary.json (floats at 17 significant digits, no timestamps), one or
more CSV files, the resolved scenario.ini and MANIFEST.txt with the theorem tags the
experiment exercises.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import flow, minimax, shooting, zeromass
from .nonlinearity import upsilon
from .scenario import (EXPERIMENTS, ConfigError, Scenario, build_nonlinearity, build_profiles, load_scenario,
                       scenario_to_ini, two_scale_ell, validate)

# theorem-level labels exercised by each experiment; outcome-dependent ones are added in the runners
TAGS = {
    "ground-state": ["lem_asympt_behav", "eq_m1"],
    "scan-b": ["eq_lagr_first", "eq_def_btilde", "eq_b_blambda", "eq_general_est_b"],
    "minimize-d": ["eq_min_L2", "lem_compact_projec"],
    "legendre": ["rem_legendre_transf"],
    "zero-mass": ["eq_zero_mass", "Pohoid", "Lem_basic-Fq"],
    "examples": ["lem_Leps_alpha", "eq_beta_12", "thm_examples(i)"],
    "stability": ["Prop:non-ex", "Cor:Exw/og2"],
}
CASE_TAGS = {"i": "thm_examples(i)", "ii": "prop_b_neg_post(ii)", "iii": "prop_b_neg_post(i)", "iv": "eq_values_b0"}


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------- output helpers

def _json_text(obj, indent: int = 0) -> str:
    # JSON with every float at 17 significant digits; non-finite floats become strings
    pad, pad1 = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return '"NaN"'
        if math.isinf(x):
            return '"Infinity"' if x > 0 else '"-Infinity"'
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad1}{json.dumps(str(k))}: {_json_text(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[\n" + ",\n".join(pad1 + _json_text(v, indent + 1) for v in seq) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_summary(path: Path, summary: dict) -> Path:
    path.write_text(_json_text(summary) + "\n")
    return path


def _csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.17g}" if isinstance(x, (float, np.floating)) else ("" if x is None else x) for x in row])
    return path


# ---------------------------------------------------------------- experiment runners

def _mass(sc: Scenario, m1: float) -> float:
    return m1 if sc.experiment.mass is None else sc.experiment.mass


def run_ground_state(sc, nl, m1, out):
    gs = shooting.find_ground_state(nl, sc.experiment.mu, sc.solver_options())
    s = gs.summary()
    s["action_over_mu_m1"] = gs.action / (gs.mu * m1)
    s["mass_over_m1"] = gs.mass / m1
    tags = list(TAGS["ground-state"])
    if nl.is_power:
        tags.append("eq_scaling_omega")
    return s, [shooting.write_ground_state_csv(gs, out / "ground_state.csv")], tags


def run_scan_b(sc, nl, m1, out):
    e = sc.experiment
    scan = minimax.scan_b(nl, _mass(sc, m1), (e.lambda_min, e.lambda_max), e.n_samples, sc.solver_options(),
                          m1=m1, refine_tol=1e-3)
    band = sc.tolerances.zero_band * m1
    if band != scan.band:
        scan = replace(scan, band=band, case_tag=minimax.classify_case(scan.b_lower, scan.b_tilde, band))
    s = scan.summary()
    s["excluded"] = [{"lambda": lam, "reason": why} for lam, why in scan.excluded]
    return s, [minimax.write_scan_csv(scan, out / "scan_b.csv")], TAGS["scan-b"] + [CASE_TAGS[scan.case_tag]]


def _seeds(sc, m):
    seeds = flow.default_seeds(sc.params, m)
    rng = np.random.default_rng(sc.seed)
    for i in range(sc.experiment.random_seeds):
        width = float(np.exp(rng.uniform(math.log(0.25), math.log(4.0))))
        seeds[f"random_gaussian_{i}"] = flow.gaussian(sc.params, width, m)
    return seeds


def run_minimize_d(sc, nl, m1, out):
    m = _mass(sc, m1)
    best, reports = flow.best_of_seeds(nl, m, sc.flow_options(), _seeds(sc, m))
    s = best.summary()
    s["mass"] = m
    s["minus_alpha_m1"] = -nl.alpha * m1
    s["seeds"] = {r.seed_label: {"d_estimate": r.d_estimate, "verdict": r.verdict} for r in reports}
    tags = list(TAGS["minimize-d"])
    tags.append({flow.CONVERGED: "thm_exists_min", flow.CONCENTRATING: "thm_nonexis_min"}.get(best.verdict, "Rem:Md"))
    return s, [flow.write_trajectory_csv(best, out / "trajectory.csv")], tags


def run_legendre(sc, nl, m1, out):
    e = sc.experiment
    m = _mass(sc, m1)
    mus = np.logspace(math.log10(e.mu_min), math.log10(e.mu_max), e.n_mu)
    res = flow.legendre_check(nl, m, mus, sc.flow_options())
    rows = []
    for mu in mus:
        try:
            a = shooting.a_of_mu(nl, float(mu))
            rows.append((float(mu), a, a - mu * m))
        except (shooting.NoSolution, shooting.ConvergenceFailure):
            rows.append((float(mu), None, None))
    s = res.as_dict()
    s["ok"] = res.gap <= res.tolerance
    return s, [_csv(out / "legendre.csv", ["mu", "a", "a_minus_mu_m"], rows)], TAGS["legendre"]


def _heights(sc):
    e = sc.experiment
    return np.logspace(math.log10(e.height_min), math.log10(e.height_max), e.n_heights)


def run_zero_mass(sc, nl, m1, out):
    e = sc.experiment
    scan = zeromass.g2_scan(nl, e.q, e.beta_cap, _heights(sc), sc.zero_mass_options())
    s = scan.summary()
    s["candidates"] = [{"height": c.height, "ZG": c.ZG, "pohozaev_res": c.pohozaev_res,
                        "decay": asdict(zeromass.decay_check(c.profile, scan.q))} for c in scan.candidates]
    tags = list(TAGS["zero-mass"])
    tags.append("Rem-val-g2" if nl.is_power else "Cor:ex-g")
    return s, [zeromass.write_scan_csv(scan, out / "zero_mass.csv")], tags


def run_examples(sc, nl, m1, out):
    e = sc.experiment
    P = sc.params
    opts = sc.solver_options()
    rows, leps = [], {}
    for alpha in e.alphas:
        table = minimax.leps_experiment(alpha, e.L_list, P, sc.nonlinearity.mollify_eps, opts)
        devs = [r.deviation for r in table]
        leps[repr(float(alpha))] = {"deviations": devs,
                                    "strictly_decreasing": all(b < a for a, b in zip(devs, devs[1:]))}
        rows += [(float(alpha), r.L, r.beta, r.target, r.deviation) for r in table]
    a1, a2 = build_profiles(sc)
    sc2 = replace(sc, nonlinearity=replace(sc.nonlinearity, kind="two_scale"))
    ell = two_scale_ell(sc2)
    two = build_nonlinearity(sc2)
    b0 = minimax.beta_of(two, 0.0, m1, opts)
    bl = minimax.beta_of(two, ell, m1, opts)
    s = {"leps": leps, "two_scale": {"alpha1": a1.alpha, "alpha2": a2.alpha, "ell": ell, "beta_0": b0,
                                     "beta_ell": bl, "m1": m1, "ordering_holds": b0 > m1 > bl,
                                     "margin": min(b0 - m1, m1 - bl)}}
    files = [_csv(out / "leps.csv", ["alpha", "L", "beta", "target", "deviation"], rows),
             _csv(out / "two_scale.csv", ["lambda", "beta"], [(0.0, b0), (ell, bl)])]
    return s, files, TAGS["examples"]


def run_stability(sc, nl, m1, out):
    e = sc.experiment
    table = zeromass.stability_experiment(nl, upsilon(sc.params), e.eps_list, e.beta_cap, _heights(sc),
                                          sc.zero_mass_options())
    rows = [(r.eps, r.verdict, r.n_candidates, r.level, r.inconclusive_fraction, r.rerun_verdict)
            for r in table.rows]
    path = _csv(out / "stability.csv",
                ["eps", "verdict", "n_candidates", "level", "inconclusive_fraction", "rerun_verdict"], rows)
    return table.summary(), [path], TAGS["stability"]


RUNNERS = {
    "ground-state": run_ground_state, "scan-b": run_scan_b, "minimize-d": run_minimize_d,
    "legendre": run_legendre, "zero-mass": run_zero_mass, "examples": run_examples, "stability": run_stability,
}


def run(sc: Scenario, out_dir) -> dict:
    """Run the scenario's experiment and write the report bundle into out_dir."""
    errors = [d for d in validate(sc) if d.severity == "error"]
    if errors:
        raise ConfigError("; ".join(str(d) for d in errors))
    name = sc.experiment.name
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    est = shooting.m1_estimate(sc.problem.N, sc.grid.n)
    m1 = est.value
    try:
        nl = build_nonlinearity(sc)
        result, files, tags = RUNNERS[name](sc, nl, m1, out)
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        raise ExperimentError(f"{name}: {type(exc).__name__}: {exc}") from exc
    elapsed = time.perf_counter() - t0
    summary = {
        "experiment": name,
        "N": sc.problem.N,
        "nonlinearity": nl.describe(),
        "m1": m1,
        "m1_provenance": est.as_dict(),
        "result": result,
        "notes": [minimax.UPPER_LEVEL_NOTE] if name == "scan-b" else [],
        "seed": sc.seed,
    }
    (out / "scenario.ini").write_text(scenario_to_ini(sc))
    write_summary(out / "summary.json", summary)
    lines = [f"experiment: {name}", "theorem tags:"] + [f"  {t}" for t in tags]
    lines += ["files:", "  summary.json", "  scenario.ini"] + [f"  {Path(f).name}" for f in files]
    lines += [f"elapsed_seconds: {elapsed:.3f}"]
    (out / "MANIFEST.txt").write_text("\n".join(lines) + "\n")
    return summary


# ---------------------------------------------------------------- argument parsing

def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="masscrit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("validate",):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI scenario file (defaults when omitted)")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: out/<command>)")
        p.add_argument("--refine", action="store_true", help="double grid, lambda samples and heights")
        p.add_argument("--seed", type=_u64, default=None, help="seed for random initializations")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.config) if args.config else Scenario()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    if args.refine:
        sc = sc.refined()
    if args.command == "validate":
        diags = validate(sc)
        for d in diags:
            print(d)
        print(scenario_to_ini(sc), end="")
        return 1 if any(d.severity == "error" for d in diags) else 0
    sc = sc.with_experiment(args.command)
    out = args.out or Path("out") / args.command
    try:
        summary = run(sc, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 3
    print(_json_text({"experiment": summary["experiment"], "result": summary["result"]}))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
