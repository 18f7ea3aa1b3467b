"""Round-trip errors of the trig potential as the index window grows.

Usage: python3 scripts/convergence_study.py [--n 16 32 64] [--colloc 200] [--tail comparison]
"""

import argparse

import numpy as np

from diracinv.core import BoundaryParams, WeightProfile, builtin_potential, make_grid
from diracinv.verify import roundtrip_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--grid", type=int, default=200)
    ap.add_argument("--colloc", type=int, default=200)
    ap.add_argument("--tail", default="comparison", choices=["comparison", "none"])
    ap.add_argument("--potential", default="trig", choices=["trig", "bump", "zero"])
    args = ap.parse_args()

    w = WeightProfile(np.pi / 2, 2.0)
    bc = BoundaryParams(1.0, 1.0)
    pot = builtin_potential(args.potential, make_grid(w, args.grid))
    print(f"{'N':>4} {'err_p':>11} {'err_q':>11} {'h1_hat':>10} {'h2_hat':>10} {'parseval':>10} {'seconds':>8}")
    for n in args.n:
        rep, _, _ = roundtrip_report(pot, w, bc, n, args.colloc, tail=args.tail)
        t = rep.timings_direct + rep.timings_inverse + rep.timings_verify
        print(f"{n:>4} {rep.errors_p_L2_rel:11.4e} {rep.errors_q_L2_rel:11.4e} {rep.h1_hat:10.6f} "
              f"{rep.h2_hat:10.6f} {rep.parseval_residual:10.3e} {t:8.1f}")


if __name__ == "__main__":
    main()
