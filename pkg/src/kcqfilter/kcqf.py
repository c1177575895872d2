"""Key conditional quotient filter.

A single bank of prior trajectories is drawn from the initial-state and
process-noise laws and propagated over the whole horizon. At every step the
posterior moments of ``x_{k+1}`` are estimated as self-normalized Monte Carlo
quotients whose weights use only ``d`` selected ("key") measurement entries,
chosen by absolute correlation with the target state inside a trailing window.

All weights are handled in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .ssm import (
    InitialStateSpec,
    NoiseSpec,
    SystemModel,
    Trajectory,
    evaluate_measurement,
    marginal_noise_log_pdf,
    noise_marginal_variance,
    propagate,
    sample_noise_path,
)

__all__ = [
    "Ensemble",
    "KeySelection",
    "KcqfConfig",
    "Estimate",
    "ReferenceValues",
    "init_ensemble",
    "reference_values",
    "select_key_conditions",
    "key_log_weights",
    "normalize_log_weights",
    "effective_sample_size",
    "weighted_estimate",
    "naive_full_quotient_weights",
    "kcqf_step",
    "kcqf_run",
]

Pair = tuple[int, int]


@dataclass(frozen=True)
class Ensemble:
    """Prior sample bank.

    ``states[j, i]`` is ``x_i`` of sample ``j`` (``i = 0..K``) and
    ``predicted[j, i - 1]`` the cached noise-free measurement ``gamma_i(x_i)``.
    """

    states: np.ndarray  # (N_s, K+1, n_x)
    predicted: np.ndarray  # (N_s, K, n_y)

    @property
    def sample_count(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    @property
    def state_dim(self) -> int:
        return self.states.shape[2]

    @property
    def meas_dim(self) -> int:
        return self.predicted.shape[2]

    @classmethod
    def from_states(cls, model: SystemModel, states: np.ndarray) -> "Ensemble":
        states = np.asarray(states, dtype=float)
        K = states.shape[1] - 1
        pred = np.empty((states.shape[0], K, model.meas_dim))
        for i in range(1, K + 1):
            pred[:, i - 1] = evaluate_measurement(model, i, states[:, i])
        return cls(states=states, predicted=pred)


@dataclass(frozen=True)
class KeySelection:
    pairs: tuple[Pair, ...]
    window_start: int
    requested: int

    @property
    def d(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class KcqfConfig:
    """Filter settings.

    ``window_len`` is the number of most recent measurement times eligible
    as key conditions; ``None`` means ``max(3, d)``.
    """

    d: int = 2
    window_len: Optional[int] = None
    sample_count: int = 50
    degeneracy_floor: float = 1.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.sample_count < 2:
            raise ValueError("sample_count must be >= 2")
        if self.degeneracy_floor < 1.0:
            raise ValueError("degeneracy_floor must be >= 1")
        if self.window_len is not None and self.window_len < 1:
            raise ValueError("window_len must be >= 1")

    def window(self, meas_dim: int = 1) -> int:
        L = max(3, self.d) if self.window_len is None else self.window_len
        if L * meas_dim < self.d:
            raise ValueError(f"window of {L} steps holds fewer than d={self.d} candidates")
        return L


@dataclass(frozen=True)
class Estimate:
    mean: np.ndarray
    covariance: np.ndarray
    ess: float
    log_normalizer: float
    degenerate: bool
    keys: Optional[KeySelection] = field(default=None, compare=False)


@dataclass(frozen=True)
class ReferenceValues:
    """Absolute correlations, one row per candidate ``(time, component)``."""

    candidates: tuple[Pair, ...]
    values: np.ndarray  # (n_candidates, n_x)
    window_start: int


# ---------------------------------------------------------------------------


def init_ensemble(
    model: SystemModel,
    init: InitialStateSpec,
    proc: NoiseSpec,
    sample_count: int,
    K: int,
    rng: np.random.Generator,
) -> Ensemble:
    """Draw ``sample_count`` initial states and process-noise paths and
    propagate them over ``K`` steps."""
    if sample_count < 2:
        raise ValueError("sample_count must be >= 2")
    if K < 1:
        raise ValueError("horizon K must be >= 1")
    x0 = init.sample(rng, sample_count)
    w = sample_noise_path(proc, K, rng, sample_count)
    return Ensemble.from_states(model, propagate(model, x0, w))


def _abs_corr(a: np.ndarray, b: np.ndarray, extra_var_a: float = 0.0) -> np.ndarray:
    """|corr| between column vector ``a`` (N,) and each column of ``b`` (N, m)."""
    da = a - a.mean()
    db = b - b.mean(axis=0)
    cov = da @ db / a.size
    var_a = np.mean(da**2) + extra_var_a
    var_b = np.mean(db**2, axis=0)
    denom = np.sqrt(var_a * var_b)
    out = np.zeros(b.shape[1])
    ok = denom > 0
    out[ok] = np.abs(cov[ok]) / denom[ok]
    return np.clip(out, 0.0, 1.0)


def reference_values(
    ensemble: Ensemble,
    target_step: int,
    window_start: int,
    meas_noise: Optional[NoiseSpec] = None,
) -> ReferenceValues:
    """Correlation-based usefulness of each candidate measurement entry.

    For every candidate ``(i, c)`` with ``window_start <= i <= target_step``
    and every state component ``m``, returns ``|corr(y_{i,c}, x_{target,m})|``
    over the ensemble. The measurement variance adds the known noise
    variance to the spread of the cached predictions.
    """
    K = ensemble.horizon
    if not 1 <= window_start <= target_step <= K:
        raise ValueError(f"need 1 <= window_start ({window_start}) <= target ({target_step}) <= K ({K})")
    target = ensemble.states[:, target_step]
    cands: list[Pair] = []
    rows = []
    for i in range(window_start, target_step + 1):
        for c in range(ensemble.meas_dim):
            extra = 0.0 if meas_noise is None else noise_marginal_variance(meas_noise, i, c)
            cands.append((i, c))
            rows.append(_abs_corr(ensemble.predicted[:, i - 1, c], target, extra))
    return ReferenceValues(tuple(cands), np.array(rows), window_start)


def select_key_conditions(r: ReferenceValues, d: int) -> KeySelection:
    """Top-``d`` candidates by their largest correlation over state components.

    Ties go to the more recent time, then to the lower component index.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if not r.candidates:
        raise ValueError("empty candidate set")
    score = r.values.max(axis=1)
    order = sorted(range(len(r.candidates)), key=lambda n: (-score[n], -r.candidates[n][0], r.candidates[n][1]))
    chosen = tuple(r.candidates[n] for n in order[:d])
    return KeySelection(pairs=chosen, window_start=r.window_start, requested=d)


def _measurement_array(measurements: Union[Trajectory, np.ndarray]) -> np.ndarray:
    if isinstance(measurements, Trajectory):
        return measurements.measurements
    y = np.asarray(measurements, dtype=float)
    return y[:, None] if y.ndim == 1 else y


def key_log_weights(
    ensemble: Ensemble,
    keys: Union[KeySelection, Sequence[Pair]],
    measurements: Union[Trajectory, np.ndarray],
    meas_noise: NoiseSpec,
) -> np.ndarray:
    """Unnormalized per-sample log weights from the key entries only."""
    pairs = keys.pairs if isinstance(keys, KeySelection) else tuple(keys)
    if not pairs:
        raise ValueError("no key conditions given")
    y = _measurement_array(measurements)
    times = np.array([i for i, _ in pairs])
    comps = np.array([c for _, c in pairs])
    if times.max() > y.shape[0]:
        raise ValueError("measurements do not cover the selected times")
    residual = y[times - 1, comps][None, :] - ensemble.predicted[:, times - 1, comps]
    return marginal_noise_log_pdf(meas_noise, pairs, residual)


def normalize_log_weights(log_weights: np.ndarray) -> tuple[np.ndarray, float]:
    """Return normalized weights and the log of the raw weight sum."""
    lw = np.asarray(log_weights, dtype=float)
    lse = float(logsumexp(lw))
    if not np.isfinite(lse):
        return np.full(lw.shape, np.nan), lse
    return np.exp(lw - lse), lse


def effective_sample_size(weights: np.ndarray) -> float:
    return float(1.0 / np.sum(np.asarray(weights) ** 2))


def _moments(x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = w @ x
    dev = x - mean
    cov = (dev * w[:, None]).T @ dev
    return mean, 0.5 * (cov + cov.T)


def weighted_estimate(
    ensemble: Ensemble,
    log_weights: np.ndarray,
    target_step: int,
    floor: float = 1.0,
) -> Estimate:
    """Posterior mean and covariance of ``x_{target_step}`` as weighted ensemble
    moments.

    Collapsed weights (non-finite normalizer or ESS below ``floor``) fall back
    to the unweighted ensemble moments and set ``degenerate``.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.shape != (ensemble.sample_count,):
        raise ValueError("need one log weight per sample")
    x = ensemble.states[:, target_step]
    w, lse = normalize_log_weights(lw)
    ess = effective_sample_size(w) if np.isfinite(lse) else 0.0
    degenerate = not np.isfinite(lse) or ess < floor
    if degenerate:
        w = np.full(lw.shape, 1.0 / lw.size)
    mean, cov = _moments(x, w)
    return Estimate(mean=mean, covariance=cov, ess=ess, log_normalizer=lse, degenerate=degenerate)


def naive_full_quotient_weights(
    ensemble: Ensemble,
    measurements: Union[Trajectory, np.ndarray],
    meas_noise: NoiseSpec,
    up_to_step: int,
) -> np.ndarray:
    """Log weights that condition on every measurement entry ``1..up_to_step``."""
    if not 1 <= up_to_step <= ensemble.horizon:
        raise ValueError("up_to_step outside the horizon")
    pairs = [(i, c) for i in range(1, up_to_step + 1) for c in range(ensemble.meas_dim)]
    return key_log_weights(ensemble, pairs, measurements, meas_noise)


def kcqf_step(
    ensemble: Ensemble,
    measurements: Union[Trajectory, np.ndarray],
    meas_noise: NoiseSpec,
    target_step: int,
    d: int,
    window_len: int,
    floor: float = 1.0,
) -> Estimate:
    """Select keys for ``x_{target_step}`` and return the weighted estimate."""
    start = max(1, target_step + 1 - window_len)
    r = reference_values(ensemble, target_step, start, meas_noise)
    keys = select_key_conditions(r, d)
    lw = key_log_weights(ensemble, keys, measurements, meas_noise)
    est = weighted_estimate(ensemble, lw, target_step, floor)
    return Estimate(est.mean, est.covariance, est.ess, est.log_normalizer, est.degenerate, keys)


def kcqf_run(
    model: SystemModel,
    init: InitialStateSpec,
    proc: NoiseSpec,
    meas: NoiseSpec,
    measurements: Union[Trajectory, np.ndarray],
    cfg: KcqfConfig,
    rng: Optional[np.random.Generator] = None,
    ensemble: Optional[Ensemble] = None,
) -> list[Estimate]:
    """Estimates for ``x_1..x_K``.

    The ensemble is drawn once (or passed in, to share it across several
    ``d``) and never resampled.
    """
    y = _measurement_array(measurements)
    K = y.shape[0]
    if ensemble is None:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        ensemble = init_ensemble(model, init, proc, cfg.sample_count, K, rng)
    elif ensemble.horizon < K:
        raise ValueError("ensemble horizon shorter than the measurement record")
    L = cfg.window(model.meas_dim)
    return [
        kcqf_step(ensemble, y, meas, t, cfg.d, L, cfg.degeneracy_floor)
        for t in range(1, K + 1)
    ]
