"""Matching constants and the inner-expansion residual decay per dimension."""

import argparse

import numpy as np

from mems_quench.linearized import (
    fit_node_constants,
    inner_expansion_residual,
    matching_constants,
    phase_plane_integrate,
)
from mems_quench.similarity import Regime, constants


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, nargs="+", default=[2, 3, 4, 5, 7, 8])
    args = parser.parse_args()
    for n in args.n:
        c = constants(n)
        if c.regime is Regime.SPIRAL:
            mc = matching_constants(c)
            print(f"n={n} spiral b={c.b:.6f} " + " ".join(f"{k}={v:.6f}" for k, v in mc.as_dict().items() if k != "b"))
        else:
            A3, A4 = fit_node_constants(phase_plane_integrate(c), c)
            print(f"n={n} node   b={c.b:.6f} A3={A3:.6f} A4={A4:.6f}")
    taus = np.arange(2.0, 12.0, 2.0)
    eta = np.linspace(0.05, 0.95, 40)
    res = [float(np.max(np.abs(inner_expansion_residual(0.7, -0.4, 3, t, eta)))) for t in taus]
    rate = -np.polyfit(taus, np.log(res), 1)[0]
    print("inner residual", ["%.3g" % r for r in res], f"decay rate {rate:.3f}")


if __name__ == "__main__":
    main()
