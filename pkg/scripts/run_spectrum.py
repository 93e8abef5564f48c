"""Spectrum sweep for several dimensions, with the matching-law prediction alongside each root."""

import argparse
import json
import time

import numpy as np

from mems_quench.cli import to_jsonable
from mems_quench.errors import NoRootsInRange
from mems_quench.linearized import matching_constants, predict_spectrum
from mems_quench.similarity import Regime, constants
from mems_quench.spectrum import find_spectrum


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, nargs="+", default=[2, 3])
    parser.add_argument("--c-min", type=float, default=1e-4)
    parser.add_argument("--c-max", type=float, default=1.5)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", default=None, help="write the summary as JSON here")
    args = parser.parse_args()

    summary = {}
    for n in args.n:
        c = constants(n)
        start = time.perf_counter()
        try:
            res = find_spectrum(c, args.c_min, args.c_max, workers=args.workers)
        except NoRootsInRange as err:
            print(f"n={n}: {err}")
            summary[n] = {"roots": []}
            continue
        entry = {"roots": res.c_values, "ratios": res.ratios, "predicted_ratio": res.predicted_ratio,
                 "seconds": time.perf_counter() - start}
        if c.regime is Regime.SPIRAL:
            mc = matching_constants(c)
            pred = np.array(predict_spectrum(mc, range(-2, 16), phase_step=np.pi))
            entry["matching"] = mc.as_dict()
            entry["nearest_prediction"] = [float(pred[np.argmin(np.abs(pred / r - 1))]) for r in res.c_values]
        summary[n] = entry
        print(f"n={n}: {len(res.c_values)} roots in {entry['seconds']:.1f} s")
        for j, r in enumerate(res.c_values, 1):
            line = f"  c_{j} = {r:.8g}"
            if "nearest_prediction" in entry:
                line += f"   (half-step law {entry['nearest_prediction'][j - 1]:.6g})"
            print(line)
        print(f"  ratios {np.round(res.ratios, 5).tolist()}  vs exp(-4pi/3b) = {res.predicted_ratio:.6g}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(to_jsonable(summary), fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
