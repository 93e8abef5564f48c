"""Quench benchmark: profile exponent, V0 limit and collapse for a set of runs."""

import argparse
import time

import numpy as np

from mems_quench.pde import KAPPA, collapse_distances, run


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=2)
    parser.add_argument("--N", type=int, nargs="+", default=[400])
    parser.add_argument("--a", type=float, nargs="+", default=[1.0, 5.0])
    parser.add_argument("--epsilon", type=float, default=1e-2)
    parser.add_argument("--kappa", type=float, nargs="+", default=[KAPPA])
    parser.add_argument("--boundary", choices=["neumann", "dirichlet"], default="neumann")
    args = parser.parse_args()

    print(f"{'N':>5} {'a':>5} {'kappa':>7} {'T_max':>12} {'alpha':>7} {'C':>7} {'V0':>7} {'free p':>7} {'steps':>6} {'s':>5}")
    for N in args.N:
        for a in args.a:
            for kappa in args.kappa:
                t0 = time.perf_counter()
                rep = run(args.n, N, epsilon=args.epsilon, a=a, kappa=kappa, boundary=args.boundary)
                alpha, C = rep.slope_fit
                print(f"{N:5d} {a:5.2f} {kappa:7.4f} {rep.T_max:12.9f} {alpha:7.4f} {C:7.4f} "
                      f"{rep.V0_limit:7.4f} {rep.free_fit['exponent']:7.4f} {rep.steps:6d} {time.perf_counter() - t0:5.1f}")
                print("      collapse distances", np.round(collapse_distances(rep), 4).tolist())


if __name__ == "__main__":
    main()
