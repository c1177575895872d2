"""KCQF time-averaged RMSE against the candidate window length.

Used to pick the default window; prints one row per (L0, d) with the mean and
spread over master seeds. The window actually used is ``max(L0, d)``.

usage: python3 scripts/window_sweep.py [--preset example-b] [--windows 3 5 8 12]
"""

import argparse
from dataclasses import replace

import numpy as np

from kcqfilter import bench


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--preset", default="example-b")
    p.add_argument("--windows", type=int, nargs="+", default=[2, 3, 5, 8, 12])
    p.add_argument("--ds", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6, 7])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = p.parse_args()

    base = bench.preset_scenarios(args.preset)
    print("window " + " ".join(f"{f'd={d}':>7s}" for d in args.ds))
    for L0 in args.windows:
        row = []
        for d in args.ds:
            spec = bench.FilterSpec("kcqf", d=(d,), window_len=max(L0, d))
            vals = [
                bench.run_scenario(replace(base, seed=s, filters=(spec,))).get("kcqf", d).erms_bar
                for s in args.seeds
            ]
            row.append(np.mean(vals))
        print(f"{L0:6d} " + " ".join(f"{v:7.3f}" for v in row))


if __name__ == "__main__":
    main()
