"""Property suites; runnable on their own with ``pytest tests/test_properties.py``."""

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kcqfilter import bench
from kcqfilter.baselines import resample_residual, resample_stratified, run_particle_filter
from kcqfilter.kcqf import Ensemble, KcqfConfig, kcqf_run, normalize_log_weights, weighted_estimate
from kcqfilter.ssm import GaussianInit, WhiteGaussian, growth_model, simulate_truth

finite = st.floats(-800, 50, allow_nan=False)
log_weights = arrays(np.float64, st.integers(1, 60), elements=finite)
RESAMPLERS = [resample_residual, resample_stratified]


@given(log_weights)
def test_weights_normalized(lw):
    w, lse = normalize_log_weights(lw)
    assert np.isfinite(lse)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all(w >= 0)


@st.composite
def ensembles(draw):
    n = draw(st.integers(2, 30))
    nx = draw(st.integers(1, 3))
    states = draw(arrays(np.float64, (n, 2, nx), elements=st.floats(-50, 50)))
    lw = draw(arrays(np.float64, n, elements=finite))
    return Ensemble(states=states, predicted=np.zeros((n, 1, 1))), lw


@given(ensembles())
def test_covariance_symmetric_psd(case):
    ens, lw = case
    est = weighted_estimate(ens, lw, 1)
    P = est.covariance
    np.testing.assert_array_equal(P, P.T)
    assert np.linalg.eigvalsh(P).min() >= -1e-8 * max(np.trace(P), 1e-300)


@given(ensembles(), st.randoms(use_true_random=False))
def test_permutation_invariance(case, rnd):
    ens, lw = case
    perm = np.array(rnd.sample(range(lw.size), lw.size))
    shuffled = Ensemble(states=ens.states[perm], predicted=ens.predicted[perm])
    a = weighted_estimate(ens, lw, 1)
    b = weighted_estimate(shuffled, lw[perm], 1)
    tol = 1e-9 * max(1.0, np.abs(ens.states).max())
    np.testing.assert_allclose(b.mean, a.mean, rtol=1e-9, atol=tol)
    np.testing.assert_allclose(b.covariance, a.covariance, rtol=1e-9, atol=tol * max(1.0, np.abs(ens.states).max()))
    assert b.ess == pytest.approx(a.ess, rel=1e-9)


def test_seed_determinism_byte_identical_csv(tmp_path):
    for preset in ("example-a", "example-b"):
        cfg = replace(bench.preset_scenarios(preset), mc_runs=2, seed=5)
        paths = [bench.emit_csv(bench.run_scenario(cfg), tmp_path / f"{preset}{i}.csv", timing=False) for i in range(2)]
        for a, b in zip(*paths):
            assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("resample", RESAMPLERS)
@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(0, 1)), st.integers(1, 200), st.integers(0, 2**32 - 1))
def test_resampling_conserves_count(resample, raw, n, seed):
    if raw.sum() <= 0:
        raw = raw + 1.0
    counts = resample(raw / raw.sum(), n, np.random.default_rng(seed))
    assert counts.sum() == n and np.all(counts >= 0)
    assert np.all(counts[raw == 0] == 0)


@pytest.mark.parametrize("resample", RESAMPLERS)
def test_resampling_unbiased(resample):
    rng = np.random.default_rng(0)
    w = np.array([0.05, 0.3, 0.125, 0.5, 0.025])
    n, trials = 13, 10_000
    counts = np.array([resample(w, n, rng) for _ in range(trials)])
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / np.sqrt(trials)
    assert np.all(np.abs(mean - n * w) <= 3 * np.maximum(se, 1e-12))


def test_pf_and_kcqf_one_key_agree_on_first_step():
    # with resampling off, N_p = N_s and one key at step 1, both reduce to likelihood weighting of prior draws
    model = growth_model()
    init, proc, meas = GaussianInit([0.0], [[2.0]]), WhiteGaussian([[10.0]]), WhiteGaussian([[1.0]])
    pf, kc = [], []
    for seed in range(20):
        truth = simulate_truth(model, init, proc, meas, 1, np.random.default_rng(100 + seed))
        rng = np.random.default_rng(seed)
        m, _ = run_particle_filter(model, init, proc, meas, truth.measurements, 2000, None, rng)
        e = kcqf_run(model, init, proc, meas, truth, KcqfConfig(d=1, sample_count=2000, seed=seed + 50))[0]
        pf.append(m[0, 0])
        kc.append(e.mean[0])
    intervals = []
    for v in (np.array(pf), np.array(kc)):
        half = 5 * v.std(ddof=1) / np.sqrt(v.size)
        intervals.append((v.mean() - half, v.mean() + half))
    (a_lo, a_hi), (b_lo, b_hi) = intervals
    assert a_lo <= b_hi and b_lo <= a_hi
