"""Acceptance criteria at their stated tolerances.

Each criterion is a ``check_*`` function returning ``(passed, detail)``. The
pytest wrappers assert on it, and every outcome is printed as one
``PASS``/``FAIL`` line in the terminal summary (or directly when the file is
run as a script). Multi-seed criteria use master seeds 0-4; single-seed ones
use the preset seed 0. Seeds are fixed up front and never tuned.
"""

from __future__ import annotations

import functools
import math
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import kendalltau

sys.path.insert(0, str(Path(__file__).parent))

from conftest import linear_model  # noqa: E402
from kcqfilter import bench  # noqa: E402
from kcqfilter.baselines import (  # noqa: E402
    GaussianBelief,
    ParticleSet,
    ckf_step,
    ekf_step,
    pf_step,
    ukf_step,
)
from kcqfilter.bench import FilterSpec, stream_rng  # noqa: E402
from kcqfilter.kcqf import (  # noqa: E402
    KcqfConfig,
    effective_sample_size,
    init_ensemble,
    kcqf_run,
    key_log_weights,
    naive_full_quotient_weights,
    normalize_log_weights,
    weighted_estimate,
)
from kcqfilter.klnoise import build_correlation, gaussianity_distance, kl_sample_path, kl_spectrum  # noqa: E402
from kcqfilter.ssm import GaussianInit, WhiteGaussian, growth_model, simulate_truth  # noqa: E402

SEEDS = (0, 1, 2, 3, 4)
NULL_REPLICATES = 5
BIG = 1_000_000

RESULTS: dict[int, tuple[bool, str]] = {}


def record(num: int, passed: bool, detail: str) -> tuple[bool, str]:
    RESULTS[num] = (bool(passed), detail)
    return bool(passed), detail


def line(num: int) -> str:
    passed, detail = RESULTS[num]
    return f"{'PASS' if passed else 'FAIL'} criterion {num:2d}: {detail}"


# ---------------------------------------------------------------------------
# cached scenario runs


@functools.lru_cache(maxsize=None)
def example_a(seed: int, sample_count: int = 50, ds: tuple = (1, 2, 3, 4), with_baselines: bool = False):
    cfg = bench.preset_scenarios("example-a")
    filters = (FilterSpec("kcqf", d=ds),)
    if with_baselines:
        filters = cfg.filters
    cfg = replace(cfg, seed=seed, sample_count=sample_count, filters=filters)
    t0 = time.perf_counter()
    rep = bench.run_scenario(cfg)
    return rep, time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def example_b(seed: int):
    cfg = replace(bench.preset_scenarios("example-b"), seed=seed)
    t0 = time.perf_counter()
    rep = bench.run_scenario(cfg)
    return rep, time.perf_counter() - t0


def _bar(rep, fid, d=None) -> float:
    return rep.get(fid, d).erms_bar


# ---------------------------------------------------------------------------
# criteria


def check_1():
    t0 = time.perf_counter()
    rep, _ = example_a(0, 50, (2,))
    secs = time.perf_counter() - t0
    e = _bar(rep, "kcqf", 2)
    return record(1, e < 5.0 and secs < 10.0, f"example-a KCQF-2 Ebar = {e:.4f} (< 5.0), {secs:.1f} s (< 10 s)")


def check_2():
    t0 = time.perf_counter()
    e2000 = np.mean([_bar(example_a(s, 2000, (2,))[0], "kcqf", 2) for s in SEEDS])
    e5000 = np.mean([_bar(example_a(s, 5000, (2,))[0], "kcqf", 2) for s in SEEDS])
    secs = time.perf_counter() - t0
    ok = 4.0 <= e2000 <= 5.0 and abs(e2000 - e5000) <= 0.5 and secs < 300
    return record(
        2, ok, f"KCQF-2 Ebar N_s=2000: {e2000:.4f} in [4, 5]; N_s=5000: {e5000:.4f}, gap {abs(e2000 - e5000):.4f} <= 0.5; {secs:.0f} s"
    )


def check_3():
    wins, rows = 0, []
    for s in SEEDS:
        rep, _ = example_a(s)
        e = {d: _bar(rep, "kcqf", d) for d in (1, 2, 3, 4)}
        ok = max(e[2], e[3]) < min(e[1], e[4])
        wins += ok
        rows.append("/".join(f"{e[d]:.2f}" for d in (1, 2, 3, 4)))
    return record(3, wins >= 4, f"d=2,3 below d=1,4 in {wins}/5 seeds (need 4); Ebar d1/d2/d3/d4: {'; '.join(rows)}")


TABLE_BANDS = {
    ("kcqf", 3): (1.32, 2.44),
    ("kcqf", 2): (1.48, 2.76),
    ("kcqf", 1): (3.36, 6.24),
    ("pf-rr", None): (3.62, 6.72),
    ("pf-sr", None): (3.85, 7.16),
    ("ukf", None): (6.1, 11.4),
    ("ekf", None): (12.0, math.inf),
    ("ckf", None): (12.0, math.inf),
}


def check_4():
    rep, secs = example_b(0)
    bad, parts = [], []
    for (fid, d), (lo, hi) in TABLE_BANDS.items():
        e = _bar(rep, fid, d)
        label = fid if d is None else f"{fid}-{d}"
        parts.append(f"{label}={e:.3f}")
        if not lo <= e <= hi:
            bad.append(label)
    ok = not bad and secs < 120
    extra = f"; out of band: {', '.join(bad)}" if bad else ""
    return record(4, ok, f"example-b seed 0: {' '.join(parts)}; {secs:.1f} s (< 120 s){extra}")


def check_5():
    wins, rows = 0, []
    for s in SEEDS:
        rep, _ = example_b(s)
        e = [_bar(rep, "kcqf", 3), _bar(rep, "pf-rr"), _bar(rep, "ukf"), _bar(rep, "ekf")]
        wins += e[0] < e[1] < e[2] < e[3]
        rows.append("<".join(f"{v:.2f}" for v in e))
    return record(5, wins == 5, f"KCQF-3 < PF-RR < UKF < EKF in {wins}/5 seeds (need 5): {'; '.join(rows)}")


def _d_sweep_ok(e: dict) -> bool:
    falling = e[1] > e[2] > e[3]
    tau = kendalltau(np.arange(3, 8), [e[d] for d in range(3, 8)]).statistic
    return falling and tau >= 0.0


def check_6():
    wins, rows = 0, []
    for s in SEEDS:
        rep, _ = example_b(s)
        e = {d: _bar(rep, "kcqf", d) for d in range(1, 8)}
        wins += _d_sweep_ok(e)
        rows.append("/".join(f"{e[d]:.2f}" for d in range(1, 8)))
    return record(
        6, wins >= 4, f"strict fall d1-3 and Kendall tau >= 0 over d3-7 in {wins}/5 seeds (need 4): {'; '.join(rows)}"
    )


def check_7():
    model = linear_model([[1.0]], [[1.0]])
    init, proc, meas = GaussianInit([0.0], [[1.0]]), WhiteGaussian([[1.0]]), WhiteGaussian([[1.0]])
    y1 = 1.3
    target = 2.0 / 3.0 * y1
    prior = GaussianBelief([0.0], [[1.0]])
    gauss = {
        name: abs(step(model, prior, 0, [y1], [[1.0]], [[1.0]]).mean[0] - target)
        for name, step in (("ekf", ekf_step), ("ukf", ukf_step), ("ckf", ckf_step))
    }
    post_sd = math.sqrt(2.0 / 3.0)

    ens = init_ensemble(model, init, proc, 10_000, 1, np.random.default_rng(70))
    est = weighted_estimate(ens, naive_full_quotient_weights(ens, np.array([[y1]]), meas, 1), 1)
    kc_err, kc_se = abs(est.mean[0] - target), post_sd / math.sqrt(est.ess)

    rng = np.random.default_rng(71)
    ps = ParticleSet(init.sample(rng, 10_000), np.full(10_000, 1e-4))
    ps = pf_step(model, ps, 0, [y1], proc, meas, None, rng)
    pf_err, pf_se = abs(ps.mean[0] - target), post_sd / math.sqrt(ps.ess)

    ok = all(v <= 1e-8 for v in gauss.values()) and kc_err <= 5 * kc_se and pf_err <= 5 * pf_se
    g = " ".join(f"{k}={v:.1e}" for k, v in gauss.items())
    return record(
        7, ok, f"|err| vs (2/3)y: {g} (<= 1e-8); kcqf {kc_err / kc_se:.3f} SE, pf {pf_err / pf_se:.3f} SE (<= 5)"
    )


def check_8():
    model = linear_model([[1.0]], [[1.0]])
    init, proc, meas = GaussianInit([0.0], [[1.0]]), WhiteGaussian([[1.0]]), WhiteGaussian([[1.0]])
    y1 = 1.3
    grid = np.array([100, 1_000, 10_000, 100_000])
    errs = np.zeros((20, grid.size))
    for s in range(20):
        for j, n in enumerate(grid):
            ens = init_ensemble(model, init, proc, int(n), 1, np.random.default_rng([80, s, j]))
            lw = key_log_weights(ens, [(1, 0)], np.array([[y1]]), meas)
            errs[s, j] = abs(weighted_estimate(ens, lw, 1).mean[0] - 2.0 / 3.0 * y1)
    mean_err = errs.mean(axis=0)
    slope = np.polyfit(np.log(grid), np.log(mean_err), 1)[0]
    return record(8, -0.7 <= slope <= -0.3, f"log-log slope {slope:.3f} in [-0.7, -0.3]; mean |err| {np.array2string(mean_err, precision=4)}")


def check_9():
    cfg = bench.preset_scenarios("example-a")
    model = growth_model()
    kc = KcqfConfig(d=2, sample_count=cfg.sample_count)
    naive_low = kcqf_high = 0
    runs = cfg.mc_runs
    for m in range(runs):
        truth = simulate_truth(model, cfg.init, cfg.proc, cfg.meas, cfg.horizon, stream_rng(0, m, "truth"))
        ens = init_ensemble(model, cfg.init, cfg.proc, cfg.sample_count, cfg.horizon, stream_rng(0, m, "kcqf"))
        w, lse = normalize_log_weights(naive_full_quotient_weights(ens, truth, cfg.meas, cfg.horizon))
        naive_ess = effective_sample_size(w) if np.isfinite(lse) else 0.0
        last = kcqf_run(model, cfg.init, cfg.proc, cfg.meas, truth, kc, ensemble=ens)[-1]
        naive_low += naive_ess < 2
        kcqf_high += last.ess > 2
    ok = naive_low >= 0.9 * runs and kcqf_high >= 0.9 * runs
    return record(
        9, ok, f"naive ESS(52) < 2 in {naive_low}/{runs}; KCQF-2 ESS(52) > 2 in {kcqf_high}/{runs} (need >= 45 each)"
    )


def check_10():
    basis = bench.preset_scenarios("example-b").proc.basis
    R = build_correlation(basis.horizon)
    vals, vecs = kl_spectrum(R)
    ortho = np.abs(vecs @ vecs.T - np.eye(vals.size)).max()
    trace_err = abs(vals.sum() - 52.0)

    paths = kl_sample_path(basis, np.random.default_rng(100), 100_000)
    var_err = np.max(np.abs(paths.var(axis=0) / basis.step_variance() - 1.0))

    # 5(a): histogram of w_26 vs its moment-matched Gaussian, null = true Gaussian draws
    a_dist = bench.fig5a_data(basis, BIG, seed=101)[0]
    a_null = max(gaussianity_distance(np.random.default_rng([102, r]).standard_normal(BIG))[0] for r in range(NULL_REPLICATES))

    # 5(b): x2|x1 vs x2|x1,x0 under K-L noise, null = the white-noise (Markov) model
    ex_a, ex_b = bench.preset_scenarios("example-a"), bench.preset_scenarios("example-b")
    b_dist = bench.fig5b_data(ex_b.init, ex_b.proc, BIG, seed=103)[0]
    b_null = max(bench.fig5b_data(ex_a.init, ex_a.proc, BIG, seed=1040 + r)[0] for r in range(NULL_REPLICATES))

    ok = ortho <= 1e-8 and trace_err <= 1e-8 and var_err <= 0.05 and a_dist > a_null and b_dist > b_null
    return record(
        10,
        ok,
        f"orthonormality {ortho:.1e}, trace err {trace_err:.1e} (<= 1e-8); step variance max rel err {var_err:.3f} (<= 0.05); "
        f"fig5a {a_dist:.4f} > null {a_null:.4f}; fig5b {b_dist:.4f} > null {b_null:.4f}",
    )


def check_11():
    path = Path(__file__).with_name("test_properties.py")
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(path)], capture_output=True, text=True
    )
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else ""
    return record(11, proc.returncode == 0, f"standalone property suite: {tail}")


CHECKS = {i: globals()[f"check_{i}"] for i in range(1, 12)}


@pytest.mark.slow
@pytest.mark.parametrize("num", list(CHECKS))
def test_criterion(num):
    passed, detail = CHECKS[num]()
    print(line(num))
    assert passed, detail


if __name__ == "__main__":
    for num, fn in CHECKS.items():
        fn()
        print(line(num), flush=True)
