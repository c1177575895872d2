"""Reference filters: EKF, UKF, CKF and bootstrap particle filters.

Each ``*_step`` maps the posterior at time ``k`` to the posterior at ``k+1``
given ``y_{k+1}``. Process noise enters through ``phi_k(x, w)``; the sigma-point
filters propagate an augmented ``(x, w)`` point set so non-additive noise is
handled as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .ssm import (
    NoiseSpec,
    SystemModel,
    evaluate_measurement,
    evaluate_transition,
    marginal_noise_log_pdf,
    measurement_jacobian,
    sample_noise_step,
    transition_jacobian,
)

__all__ = [
    "GaussianBelief",
    "ParticleSet",
    "UTParams",
    "FilterError",
    "covariance_sqrt",
    "sigma_points",
    "cubature_points",
    "unscented_transform",
    "kalman_update",
    "ekf_step",
    "ukf_step",
    "ckf_step",
    "pf_step",
    "resample_residual",
    "resample_stratified",
    "run_gaussian_filter",
    "run_particle_filter",
]


class FilterError(RuntimeError):
    """A baseline could not continue (singular innovation, failed square root)."""


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "covariance", np.atleast_2d(np.asarray(self.covariance, dtype=float)))


@dataclass(frozen=True)
class ParticleSet:
    particles: np.ndarray  # (N_p, n_x)
    weights: np.ndarray  # (N_p,)
    degenerate: bool = False

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))


@dataclass(frozen=True)
class UTParams:
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0


def covariance_sqrt(cov: np.ndarray, retries: int = 3) -> np.ndarray:
    """Lower Cholesky factor, adding ``1e-12 * trace`` jitter (x10 per retry)."""
    cov = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12 * max(np.trace(cov), 1e-300)
    eye = np.eye(cov.shape[0])
    for _ in range(retries):
        try:
            return np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FilterError("covariance square root failed")


def sigma_points(mean: np.ndarray, cov: np.ndarray, params: UTParams = UTParams()):
    """Scaled unscented points (rows) with mean and covariance weights."""
    n = mean.size
    lam = params.alpha**2 * (n + params.kappa) - n
    root = covariance_sqrt((n + lam) * cov)
    pts = np.vstack([mean, mean + root.T, mean - root.T])
    wm = np.full(2 * n + 1, 0.5 / (n + lam))
    wm[0] = lam / (n + lam)
    wc = wm.copy()
    wc[0] += 1.0 - params.alpha**2 + params.beta
    return pts, wm, wc


def cubature_points(mean: np.ndarray, cov: np.ndarray):
    """Third-degree spherical-radial rule: ``2n`` points, equal weights."""
    n = mean.size
    root = covariance_sqrt(cov)
    offsets = np.sqrt(n) * root.T
    pts = np.vstack([mean + offsets, mean - offsets])
    w = np.full(2 * n, 1.0 / (2 * n))
    return pts, w, w


def unscented_transform(fn: Callable, pts: np.ndarray, wm: np.ndarray, wc: np.ndarray):
    """Push points through ``fn`` (batched over rows); return mean, cov and the
    transformed points."""
    out = np.asarray(fn(pts), dtype=float).reshape(pts.shape[0], -1)
    mean = wm @ out
    dev = out - mean
    cov = (dev * wc[:, None]).T @ dev
    return mean, 0.5 * (cov + cov.T), out


def kalman_update(mean, cov, y_pred, S, C, y) -> GaussianBelief:
    """Linear update given predicted measurement, innovation covariance ``S``
    and state/measurement cross-covariance ``C``."""
    try:
        gain = np.linalg.solve(S.T, C.T).T
    except np.linalg.LinAlgError:
        raise FilterError("singular innovation covariance") from None
    if not np.all(np.isfinite(gain)):
        raise FilterError("singular innovation covariance")
    new_mean = mean + gain @ (np.atleast_1d(y) - y_pred)
    new_cov = cov - gain @ S @ gain.T
    return GaussianBelief(new_mean, 0.5 * (new_cov + new_cov.T))


def _cov(m) -> np.ndarray:
    return np.atleast_2d(np.asarray(m, dtype=float))


def ekf_step(model: SystemModel, belief: GaussianBelief, k: int, y, Q, R) -> GaussianBelief:
    Q, R = _cov(Q), _cov(R)
    w0 = np.zeros(model.noise_dim)
    fx, fw = transition_jacobian(model, k, belief.mean, w0)
    m_pred = evaluate_transition(model, k, belief.mean, w0)
    P_pred = fx @ belief.covariance @ fx.T + fw @ Q @ fw.T
    H = measurement_jacobian(model, k + 1, m_pred)
    y_pred = evaluate_measurement(model, k + 1, m_pred)
    S = H @ P_pred @ H.T + R
    return kalman_update(m_pred, P_pred, y_pred, S, P_pred @ H.T, y)


def _point_filter_step(model, belief, k, y, Q, R, make_points) -> GaussianBelief:
    Q, R = _cov(Q), _cov(R)
    n, q = model.state_dim, model.noise_dim
    aug_mean = np.concatenate([belief.mean, np.zeros(q)])
    aug_cov = np.zeros((n + q, n + q))
    aug_cov[:n, :n] = belief.covariance
    aug_cov[n:, n:] = Q
    pts, wm, wc = make_points(aug_mean, aug_cov)
    m_pred, P_pred, _ = unscented_transform(
        lambda p: evaluate_transition(model, k, p[:, :n], p[:, n:]), pts, wm, wc
    )
    pts, wm, wc = make_points(m_pred, P_pred)
    y_pred, S, Y = unscented_transform(lambda p: evaluate_measurement(model, k + 1, p), pts, wm, wc)
    S = S + R
    C = ((pts - m_pred) * wc[:, None]).T @ (Y - y_pred)
    return kalman_update(m_pred, P_pred, y_pred, S, C, y)


def ukf_step(model, belief, k, y, Q, R, ut_params: UTParams = UTParams()) -> GaussianBelief:
    return _point_filter_step(model, belief, k, y, Q, R, lambda m, P: sigma_points(m, P, ut_params))


def ckf_step(model, belief, k, y, Q, R) -> GaussianBelief:
    return _point_filter_step(model, belief, k, y, Q, R, cubature_points)


# ---------------------------------------------------------------------------
# Particle filters


def resample_residual(weights, n: int, rng: np.random.Generator) -> np.ndarray:
    """Copy counts: ``floor(n w_i)`` deterministic copies, the remainder drawn
    multinomially from the residual weights."""
    w = np.asarray(weights, dtype=float)
    counts = np.floor(n * w).astype(np.int64)
    rest = n - int(counts.sum())
    if rest > 0:
        resid = n * w - counts
        resid = np.clip(resid, 0.0, None)
        counts += rng.multinomial(rest, resid / resid.sum())
    return counts


def resample_stratified(weights, n: int, rng: np.random.Generator) -> np.ndarray:
    """Copy counts from one uniform draw per stratum ``[(i + u_i) / n]``."""
    w = np.asarray(weights, dtype=float)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    u = (np.arange(n) + rng.random(n)) / n
    idx = np.searchsorted(cdf, u, side="right")
    return np.bincount(np.minimum(idx, w.size - 1), minlength=w.size)


def pf_step(
    model: SystemModel,
    particles: ParticleSet,
    k: int,
    y,
    proc: NoiseSpec,
    meas: NoiseSpec,
    resampler: Optional[Callable] = resample_residual,
    rng: Optional[np.random.Generator] = None,
) -> ParticleSet:
    """Bootstrap step: propagate with fresh noise, reweight by the likelihood of
    ``y_{k+1}``, resample when ESS falls below half the particle count.

    ``resampler=None`` disables resampling.
    """
    rng = np.random.default_rng() if rng is None else rng
    x, w = particles.particles, particles.weights
    n = x.shape[0]
    noise = sample_noise_step(proc, k + 1, rng, n)
    x_new = evaluate_transition(model, k, x, noise)
    pred = evaluate_measurement(model, k + 1, x_new)
    pairs = [(k + 1, c) for c in range(model.meas_dim)]
    loglik = marginal_noise_log_pdf(meas, pairs, np.atleast_1d(y)[None, :] - pred)
    with np.errstate(divide="ignore"):
        lw = np.log(w) + loglik
    lse = logsumexp(lw)
    if not np.isfinite(lse):
        return ParticleSet(x_new, np.full(n, 1.0 / n), degenerate=True)
    w_new = np.exp(lw - lse)
    w_new /= w_new.sum()
    post = ParticleSet(x_new, w_new)
    if resampler is not None and post.ess < n / 2:
        counts = resampler(w_new, n, rng)
        post = ParticleSet(np.repeat(x_new, counts, axis=0), np.full(n, 1.0 / n))
    return post


# ---------------------------------------------------------------------------
# Whole-horizon drivers


def run_gaussian_filter(step, model, prior: GaussianBelief, measurements: np.ndarray, Q, R, **kw):
    """Apply ``step`` for ``k = 0..K-1``; returns the posterior means ``(K, n_x)``."""
    belief = prior
    out = np.empty((measurements.shape[0], model.state_dim))
    for k in range(measurements.shape[0]):
        belief = step(model, belief, k, measurements[k], Q, R, **kw)
        if not np.all(np.isfinite(belief.mean)):
            raise FilterError(f"non-finite estimate at step {k + 1}")
        out[k] = belief.mean
    return out


def run_particle_filter(model, init, proc, meas, measurements: np.ndarray, n: int, resampler, rng):
    """Bootstrap filter over the horizon; returns posterior means and the count
    of degenerate steps."""
    ps = ParticleSet(init.sample(rng, n), np.full(n, 1.0 / n))
    out = np.empty((measurements.shape[0], model.state_dim))
    degenerate = 0
    for k in range(measurements.shape[0]):
        # the estimate is the weighted mean before any resampling
        ps = pf_step(model, ps, k, measurements[k], proc, meas, None, rng)
        out[k] = ps.mean
        degenerate += ps.degenerate
        if resampler is not None and ps.ess < n / 2:
            counts = resampler(ps.weights, n, rng)
            ps = ParticleSet(np.repeat(ps.particles, counts, axis=0), np.full(n, 1.0 / n))
    return out, degenerate
