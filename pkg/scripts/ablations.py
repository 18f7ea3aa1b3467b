"""Effect of the reference terms and of the recovery weight on round-trip errors.

Compares, for the trig potential at one window size:
  * reference terms: fitted potential-free spectrum vs plain n pi/mu(pi) truncation;
  * recovery formula: rho (A B - B A) vs rho A B - B A.
Errors are reported separately on each side of the jump point, excluding it.

Usage: python3 scripts/ablations.py [--n 32] [--colloc 200]
"""

import argparse

import numpy as np

from diracinv.core import BoundaryParams, WeightProfile, builtin_potential, make_grid
from diracinv.direct import compute_spectrum
from diracinv.glm import KernelBuilder, reconstruct_omega, solve_kernel
from diracinv.verify import relative_l2


def side_errors(pot, ref, w):
    g = pot.grid
    out = []
    for mask in (g < w.a, g > w.a):
        out.append(relative_l2(pot.p[mask] - ref.p[mask], ref.p[mask], g[mask]))
        out.append(relative_l2(pot.q[mask] - ref.q[mask], ref.q[mask], g[mask]))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--colloc", type=int, default=200)
    args = ap.parse_args()

    w = WeightProfile(np.pi / 2, 2.0)
    bc = BoundaryParams(1.0, 1.0)
    pot_in = builtin_potential("trig", make_grid(w, 200))
    spec = compute_spectrum(pot_in, w, bc, args.n)
    grid = make_grid(w, args.colloc)
    ref = pot_in.resample(grid)

    print(f"N = {args.n}, J = {args.colloc}")
    print(f"{'tail':>11} {'formula':>9} {'p left':>10} {'q left':>10} {'p right':>10} {'q right':>10}")
    for tail in ("comparison", "none"):
        field, _ = solve_kernel(KernelBuilder(spec, w, tail=tail), grid)
        for formula in ("weighted", "literal"):
            pot, _ = reconstruct_omega(field, w, formula)
            errs = side_errors(pot, ref, w)
            print(f"{tail:>11} {formula:>9} " + " ".join(f"{e:10.3e}" for e in errs))


if __name__ == "__main__":
    main()
