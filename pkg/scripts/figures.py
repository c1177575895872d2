"""Write plot data for every figure into one directory.

usage: python3 scripts/figures.py [--out results/figures] [--quick]

``--quick`` shrinks the sample counts so the whole set finishes in seconds.
"""

import argparse
from dataclasses import replace
from pathlib import Path

from kcqfilter import bench


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", type=Path, default=Path("results/figures"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true")
    args = p.parse_args()

    a = replace(bench.preset_scenarios("example-a"), seed=args.seed)
    b = replace(bench.preset_scenarios("example-b"), seed=args.seed)
    grid = bench.SWEEP_GRID
    n_big = 1_000_000
    if args.quick:
        a, b = replace(a, mc_runs=5), replace(b, mc_runs=5)
        grid, n_big = (50, 200, 1000), 50_000

    only_kcqf = replace(a, filters=tuple(f for f in a.filters if f.id == "kcqf"))
    written = []
    written += bench.emit_plotdata(bench.run_scenario(only_kcqf), "fig1", args.out)
    rep_b = bench.run_scenario(b)
    written += bench.emit_plotdata(rep_b, "fig2", args.out)
    written += bench.emit_plotdata(rep_b, "fig3", args.out)
    written += bench.emit_plotdata(bench.sample_sweep(a, (2, 3), grid), "fig4", args.out)
    written += bench.emit_plotdata(bench.fig5a_data(b.proc.basis, n_big, seed=args.seed), "fig5a", args.out)
    written += bench.emit_plotdata(bench.fig5b_data(b.init, b.proc, n_big, seed=args.seed), "fig5b", args.out)
    written += bench.emit_plotdata(bench.sample_sweep(b, (2, 3, 4), grid), "fig6", args.out)
    for path in written:
        print(path)


if __name__ == "__main__":
    main()
