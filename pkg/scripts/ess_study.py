"""Effective sample size at the final step: all-conditions weights vs KCQF.

Reports the fraction of runs above
and below ESS 2 for the naive estimator and for KCQF with each d and window.

usage: python3 scripts/ess_study.py [--preset example-a] [--runs 50]
"""

import argparse

import numpy as np

from kcqfilter import bench
from kcqfilter.kcqf import (
    KcqfConfig,
    effective_sample_size,
    init_ensemble,
    kcqf_run,
    naive_full_quotient_weights,
    normalize_log_weights,
)
from kcqfilter.ssm import simulate_truth


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--preset", default="example-a")
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ds", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--windows", type=int, nargs="+", default=[3, 8])
    args = p.parse_args()

    cfg = bench.preset_scenarios(args.preset)
    model = bench.MODELS[cfg.model]()
    naive = []
    kc = {(d, L): [] for d in args.ds for L in args.windows}
    for m in range(args.runs):
        truth = simulate_truth(model, cfg.init, cfg.proc, cfg.meas, cfg.horizon, bench.stream_rng(args.seed, m, "truth"))
        ens = init_ensemble(model, cfg.init, cfg.proc, cfg.sample_count, cfg.horizon, bench.stream_rng(args.seed, m, "kcqf"))
        w, lse = normalize_log_weights(naive_full_quotient_weights(ens, truth, cfg.meas, cfg.horizon))
        naive.append(effective_sample_size(w) if np.isfinite(lse) else 0.0)
        for d, L in kc:
            run_cfg = KcqfConfig(d=d, window_len=max(L, d), sample_count=cfg.sample_count)
            kc[(d, L)].append(kcqf_run(model, cfg.init, cfg.proc, cfg.meas, truth, run_cfg, ensemble=ens)[-1].ess)

    naive = np.array(naive)
    print(f"naive     ESS<2 in {np.mean(naive < 2):.0%}  median ESS {np.median(naive):.2f}")
    for (d, L), v in kc.items():
        v = np.array(v)
        print(f"kcqf d={d} L={max(L, d):2d}  ESS>2 in {np.mean(v > 2):.0%}  median ESS {np.median(v):.2f}")


if __name__ == "__main__":
    main()
