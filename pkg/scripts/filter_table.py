"""Time-averaged RMSE and CPU seconds for every filter on example-b.

usage: python3 scripts/filter_table.py [--seeds 0 1 2 3 4] [--out results/filters.csv]
"""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from kcqfilter import bench


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--preset", default="example-b")
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--out", type=Path, default=Path("results/filters.csv"))
    args = p.parse_args()

    base = bench.preset_scenarios(args.preset)
    bars, cpu = {}, {}
    for seed in args.seeds:
        rep = bench.run_scenario(replace(base, seed=seed))
        bench.emit_csv(rep, args.out.with_name(f"{args.out.stem}_seed{seed}.csv"))
        for r in rep.results:
            bars.setdefault(r.label, []).append(r.erms_bar)
            cpu.setdefault(r.label, []).append(r.cpu_seconds)

    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write("filter,e_rms_bar_mean,e_rms_bar_sd,cpu_seconds\n")
        for label in bars:
            v = np.array(bars[label])
            sd = v.std(ddof=1) if v.size > 1 else 0.0
            fh.write(f"{label},{v.mean():.6g},{sd:.6g},{np.mean(cpu[label]):.6g}\n")
            print(f"{label:8s} {v.mean():8.4f} +- {sd:.4f}   {np.mean(cpu[label]) * 1e3:7.1f} ms")


if __name__ == "__main__":
    main()
