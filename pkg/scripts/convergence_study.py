#!/usr/bin/env python3
"""Grid-refinement table for the critical mass and one perturbed ground state.

Prints m1 at n = 1024 ... 8192 for N = 2, 3, 4 with the Richardson value, then the
action of the bump ground state at mu = 1 under the same refinement.
"""

import argparse

from masscrit.grid import ProblemParams
from masscrit.nonlinearity import bump_family
from masscrit.shooting import SolverOptions, find_ground_state, m1_estimate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", type=int, nargs="*", default=[2, 3, 4])
    args = ap.parse_args()
    print(f"{'N':>2} {'n':>6} {'m1 (grid n)':>22} {'Richardson':>22}")
    for N in args.dims:
        for n in (1024, 2048, 4096):
            est = m1_estimate(N, n)
            print(f"{N:>2} {n:>6} {est.coarse:22.15g} {est.value:22.15g}")
    P = ProblemParams(2)
    nl = bump_family(P, 0.5, 1)
    print("\nbump (eps = 0.5, G >= G0), N = 2, mu = 1")
    prev = None
    for n in (1024, 2048, 4096, 8192):
        gs = find_ground_state(nl, 1.0, SolverOptions(n=n))
        diff = "" if prev is None else f"{gs.action - prev:+.3e}"
        print(f"{n:>6} action {gs.action:.15g} {diff:>12}  residual {gs.max_residual:.1e}")
        prev = gs.action


if __name__ == "__main__":
    main()
