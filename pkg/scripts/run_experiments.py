#!/usr/bin/env python3
"""Run the standard experiment set and write one report bundle per run under --out."""

import argparse
import sys
import time
from pathlib import Path

from masscrit.cli import ExperimentError, run
from masscrit.scenario import ConfigError, Scenario, load_scenario

HERE = Path(__file__).resolve().parent
CONFIGS = HERE / "configs"

# (bundle name, config file or None for defaults, experiment)
PLAN = [
    ("ground_state_power", "power.ini", "ground-state"),
    ("scan_b_power", "power.ini", "scan-b"),
    ("scan_b_bump_plus", "bump_plus.ini", "scan-b"),
    ("scan_b_bump_minus", "bump_minus.ini", "scan-b"),
    ("minimize_d_bump_plus", "bump_plus.ini", "minimize-d"),
    ("minimize_d_rho", "rho.ini", "minimize-d"),
    ("legendre_bump_plus", "bump_plus.ini", "legendre"),
    ("scan_b_two_scale", "two_scale.ini", "scan-b"),
    ("examples", None, "examples"),
    ("zero_mass_power", "power.ini", "zero-mass"),
    ("zero_mass_g2", "g2_n3.ini", "zero-mass"),
    ("stability_g2", "g2_n3.ini", "stability"),
]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--only", nargs="*", help="bundle names to run (default: all)")
    ap.add_argument("--refine", action="store_true")
    args = ap.parse_args(argv)
    failed = 0
    for name, cfg, exp in PLAN:
        if args.only and name not in args.only:
            continue
        sc = load_scenario(CONFIGS / cfg) if cfg else Scenario()
        if args.refine:
            sc = sc.refined()
        t0 = time.perf_counter()
        try:
            summary = run(sc.with_experiment(exp), args.out / name)
        except (ConfigError, ExperimentError) as exc:
            print(f"{name:24s} FAILED  {exc}")
            failed += 1
            continue
        res = summary["result"]
        key = next((k for k in ("case_tag", "verdict", "verdict_g2", "baseline_verdict", "ok", "mass_over_m1") if k in res), None)
        shown = f"{key}={res[key]}" if key else ""
        print(f"{name:24s} {time.perf_counter() - t0:7.1f} s  {shown}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
