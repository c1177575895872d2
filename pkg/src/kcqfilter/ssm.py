"""Nonlinear state-space models, noise specifications and truth simulation.

The model is

    x_{k+1} = phi_k(x_k, w_k)
    y_{k}   = gamma_k(x_k) + v_k

Maps are vectorized: states carry a trailing axis of length ``state_dim`` and
any number of leading batch axes.

Noise paths are stored with shape ``(K, dim)``. Row ``i - 1`` holds the draw
attached to time ``i``: the process noise consumed when producing ``x_i`` and
the measurement noise added to ``y_i``. Index pairs ``(i, c)`` used throughout
the package address exactly that element.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg

__all__ = [
    "SystemModel",
    "WhiteGaussian",
    "JointGaussian",
    "KLUniform",
    "CustomNoise",
    "NoiseSpec",
    "GaussianInit",
    "CustomInit",
    "InitialStateSpec",
    "Trajectory",
    "evaluate_transition",
    "evaluate_measurement",
    "transition_jacobian",
    "measurement_jacobian",
    "sample_noise_path",
    "sample_noise_step",
    "marginal_noise_log_pdf",
    "noise_marginal_variance",
    "noise_step_covariance",
    "simulate_truth",
    "propagate",
    "growth_model",
]

_LOG_2PI = np.log(2.0 * np.pi)


def _check_covariance(cov: np.ndarray, name: str) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1]:
        raise ValueError(f"{name} must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12, rtol=0.0):
        raise ValueError(f"{name} is not symmetric")
    if cov.size and np.linalg.eigvalsh(cov).min() < -1e-10:
        raise ValueError(f"{name} is not positive semidefinite")
    return cov


# ---------------------------------------------------------------------------
# Model


@dataclass(frozen=True)
class SystemModel:
    """Transition/measurement maps with their dimensions.

    ``transition(k, x, w)`` returns ``x_{k+1}``; ``measurement(k, x)`` returns
    the noise-free measurement of a state at time ``k``. Jacobians are
    optional and default to central finite differences.
    """

    state_dim: int
    meas_dim: int
    transition: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    measurement: Callable[[int, np.ndarray], np.ndarray]
    noise_dim: Optional[int] = None
    transition_jacobian: Optional[Callable[[int, np.ndarray, np.ndarray], np.ndarray]] = None
    measurement_jacobian: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    name: str = "model"

    def __post_init__(self):
        if self.state_dim < 1 or self.meas_dim < 1:
            raise ValueError("state_dim and meas_dim must be positive")
        if self.noise_dim is None:
            object.__setattr__(self, "noise_dim", self.state_dim)
        elif self.noise_dim < 1:
            raise ValueError("noise_dim must be positive")


def _as_state(x, dim: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise ValueError(f"{what} has trailing length {x.shape[-1]}, expected {dim}")
    return x


def evaluate_transition(model: SystemModel, k: int, x, w) -> np.ndarray:
    """Apply ``phi_k(x, w)``; accepts single states or batches."""
    x = _as_state(x, model.state_dim, "state")
    w = _as_state(w, model.noise_dim, "process noise")
    out = np.asarray(model.transition(k, x, w), dtype=float)
    return out.reshape(np.broadcast_shapes(x.shape[:-1], w.shape[:-1]) + (model.state_dim,))


def evaluate_measurement(model: SystemModel, k: int, x) -> np.ndarray:
    """Apply ``gamma_k(x)``; accepts single states or batches."""
    x = _as_state(x, model.state_dim, "state")
    out = np.asarray(model.measurement(k, x), dtype=float)
    return out.reshape(x.shape[:-1] + (model.meas_dim,))


def _fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, out_dim: int) -> np.ndarray:
    jac = np.empty((out_dim, x.size))
    for i in range(x.size):
        h = max(1e-6, 1e-6 * abs(x[i]))
        step = np.zeros_like(x)
        step[i] = h
        jac[:, i] = (fn(x + step) - fn(x - step)) / (2.0 * h)
    return jac


def transition_jacobian(model: SystemModel, k: int, x, w) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(d phi/d x, d phi/d w)`` at a single point."""
    x = _as_state(x, model.state_dim, "state").reshape(model.state_dim)
    w = _as_state(w, model.noise_dim, "process noise").reshape(model.noise_dim)
    if model.transition_jacobian is not None:
        jx, jw = model.transition_jacobian(k, x, w)
        return np.atleast_2d(jx).astype(float), np.atleast_2d(jw).astype(float)
    jx = _fd_jacobian(lambda z: evaluate_transition(model, k, z, w), x, model.state_dim)
    jw = _fd_jacobian(lambda z: evaluate_transition(model, k, x, z), w, model.state_dim)
    return jx, jw


def measurement_jacobian(model: SystemModel, k: int, x) -> np.ndarray:
    x = _as_state(x, model.state_dim, "state").reshape(model.state_dim)
    if model.measurement_jacobian is not None:
        return np.atleast_2d(model.measurement_jacobian(k, x)).astype(float)
    return _fd_jacobian(lambda z: evaluate_measurement(model, k, z), x, model.meas_dim)


def growth_model() -> SystemModel:
    """The univariate nonstationary growth model used by both benchmarks.

    x_{k+1} = x_k/2 + 25 x_k / (1 + x_k^2) + 8 cos(1.2 k) + w_k,  y = x^2/20 + v.
    """

    def transition(k, x, w):
        return 0.5 * x + 25.0 * x / (1.0 + x**2) + 8.0 * np.cos(1.2 * k) + w

    def measurement(k, x):
        return x**2 / 20.0

    def transition_jac(k, x, w):
        dx = 0.5 + 25.0 * (1.0 - x**2) / (1.0 + x**2) ** 2
        return dx.reshape(1, 1), np.ones((1, 1))

    def measurement_jac(k, x):
        return (x / 10.0).reshape(1, 1)

    return SystemModel(
        state_dim=1,
        meas_dim=1,
        transition=transition,
        measurement=measurement,
        noise_dim=1,
        transition_jacobian=transition_jac,
        measurement_jacobian=measurement_jac,
        name="growth",
    )


# ---------------------------------------------------------------------------
# Noise specifications


@dataclass(frozen=True)
class WhiteGaussian:
    """Independent N(mean, cov) draws at every step."""

    cov: np.ndarray
    mean: Optional[np.ndarray] = None

    def __post_init__(self):
        cov = _check_covariance(self.cov, "WhiteGaussian covariance")
        object.__setattr__(self, "cov", cov)
        mean = np.zeros(cov.shape[0]) if self.mean is None else np.atleast_1d(np.asarray(self.mean, float))
        if mean.shape != (cov.shape[0],):
            raise ValueError("mean length does not match covariance")
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return self.cov.shape[0]


@dataclass(frozen=True)
class JointGaussian:
    """One Gaussian over the whole horizon.

    ``mean`` has shape ``(K, dim)``; ``cov`` is ``(K*dim, K*dim)`` ordered
    time-major, i.e. element ``(i, c)`` sits at flat position ``(i-1)*dim + c``.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        if mean.ndim == 1:
            mean = mean[:, None]
        cov = _check_covariance(self.cov, "JointGaussian covariance")
        if cov.shape[0] != mean.size:
            raise ValueError("horizon covariance size does not match mean")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[1]

    @property
    def horizon(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_white(cls, white: WhiteGaussian, K: int) -> "JointGaussian":
        return cls(np.tile(white.mean, (K, 1)), linalg.block_diag(*([white.cov] * K)))


@dataclass(frozen=True)
class KLUniform:
    """Scalar correlated noise from a truncated Karhunen-Loeve basis."""

    basis: "object"  # klnoise.KLBasis; kept loose to avoid a circular import

    @property
    def dim(self) -> int:
        return 1

    @property
    def horizon(self) -> int:
        return self.basis.horizon


@dataclass(frozen=True)
class CustomNoise:
    """User-supplied sampler and marginal log density.

    ``sampler(K, rng, size)`` returns paths of shape ``size + (K, dim)``.
    ``log_pdf(indices, residual)`` evaluates the marginal log density of the
    selected ``(time, component)`` entries; ``residual`` has shape ``(..., d)``.
    """

    dim: int
    sampler: Callable
    log_pdf: Optional[Callable] = None
    variance: Optional[Callable[[int, int], float]] = None


NoiseSpec = Union[WhiteGaussian, JointGaussian, KLUniform, CustomNoise]


def _size_tuple(size) -> tuple:
    if size is None:
        return ()
    if isinstance(size, (int, np.integer)):
        return (int(size),)
    return tuple(size)


def sample_noise_path(spec: NoiseSpec, K: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw noise paths of shape ``size + (K, dim)``."""
    if K < 1:
        raise ValueError("horizon K must be >= 1")
    shape = _size_tuple(size)
    if isinstance(spec, WhiteGaussian):
        if not np.any(spec.cov):
            return np.broadcast_to(spec.mean, shape + (K, spec.dim)).copy()
        chol = _psd_sqrt(spec.cov)
        z = rng.standard_normal(shape + (K, spec.dim))
        return spec.mean + z @ chol.T
    if isinstance(spec, JointGaussian):
        if spec.horizon != K:
            raise ValueError(f"JointGaussian horizon {spec.horizon} != K={K}")
        chol = _psd_sqrt(spec.cov)
        z = rng.standard_normal(shape + (K * spec.dim,))
        return (spec.mean.reshape(-1) + z @ chol.T).reshape(shape + (K, spec.dim))
    if isinstance(spec, KLUniform):
        from .klnoise import kl_sample_path

        if spec.basis.horizon != K:
            raise ValueError(f"KL basis horizon {spec.basis.horizon} != K={K}")
        return kl_sample_path(spec.basis, rng, size)[..., None]
    if isinstance(spec, CustomNoise):
        out = np.asarray(spec.sampler(K, rng, shape), dtype=float)
        if out.shape != shape + (K, spec.dim):
            raise ValueError(f"custom sampler returned shape {out.shape}")
        return out
    raise TypeError(f"unsupported noise spec {type(spec).__name__}")


def sample_noise_step(spec: NoiseSpec, k: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw the noise attached to time ``k`` alone, shape ``size + (dim,)``.

    Only specs with an independent per-step marginal support this.
    """
    shape = _size_tuple(size)
    if isinstance(spec, WhiteGaussian):
        return sample_noise_path(spec, 1, rng, size)[..., 0, :]
    if isinstance(spec, JointGaussian):
        sl = slice((k - 1) * spec.dim, k * spec.dim)
        chol = _psd_sqrt(spec.cov[sl, sl])
        return spec.mean[k - 1] + rng.standard_normal(shape + (spec.dim,)) @ chol.T
    raise ValueError(f"{type(spec).__name__} has no independent per-step draw")


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _gaussian_log_pdf(residual: np.ndarray, mean: np.ndarray, cov: np.ndarray, indices) -> np.ndarray:
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        raise ValueError(f"singular marginal covariance for indices {list(indices)}") from None
    diag = np.diag(chol)
    if np.any(diag <= 0.0) or not np.all(np.isfinite(diag)):
        raise ValueError(f"singular marginal covariance for indices {list(indices)}")
    dev = residual - mean
    sol = linalg.solve_triangular(chol, dev.reshape(-1, dev.shape[-1]).T, lower=True)
    maha = np.sum(sol**2, axis=0).reshape(dev.shape[:-1])
    d = dev.shape[-1]
    return -0.5 * (maha + d * _LOG_2PI) - np.sum(np.log(diag))


def _normalize_indices(indices) -> list[tuple[int, int]]:
    return [(int(i), int(c)) for i, c in indices]


def marginal_noise_log_pdf(spec: NoiseSpec, indices: Sequence[tuple[int, int]], residual) -> np.ndarray:
    """Log density of the noise entries at ``indices`` evaluated at ``residual``.

    ``residual`` has shape ``(..., len(indices))``; leading axes are batch.
    """
    idx = _normalize_indices(indices)
    residual = np.asarray(residual, dtype=float)
    if residual.ndim == 0:
        residual = residual.reshape(1)
    if residual.shape[-1] != len(idx):
        raise ValueError(f"residual length {residual.shape[-1]} != {len(idx)} indices")
    if not idx:
        return np.zeros(residual.shape[:-1])
    for i, c in idx:
        if i < 1 or not 0 <= c < spec.dim:
            raise ValueError(f"index {(i, c)} out of range")

    if isinstance(spec, WhiteGaussian):
        # group by time so within-step correlation is honoured
        by_time: dict[int, list[int]] = {}
        for pos, (i, c) in enumerate(idx):
            by_time.setdefault(i, []).append(pos)
        total = np.zeros(residual.shape[:-1])
        for i, pos in by_time.items():
            comps = [idx[p][1] for p in pos]
            sub = spec.cov[np.ix_(comps, comps)]
            total = total + _gaussian_log_pdf(
                residual[..., pos], spec.mean[comps], sub, [idx[p] for p in pos]
            )
        return total
    if isinstance(spec, JointGaussian):
        flat = []
        for i, c in idx:
            if i > spec.horizon:
                raise ValueError(f"index {(i, c)} beyond horizon {spec.horizon}")
            flat.append((i - 1) * spec.dim + c)
        sub = spec.cov[np.ix_(flat, flat)]
        return _gaussian_log_pdf(residual, spec.mean.reshape(-1)[flat], sub, idx)
    if isinstance(spec, CustomNoise):
        if spec.log_pdf is None:
            raise ValueError("custom noise spec has no marginal log density")
        return np.asarray(spec.log_pdf(idx, residual), dtype=float)
    if isinstance(spec, KLUniform):
        raise ValueError("KL-uniform noise has no closed-form marginal density; wrap it in CustomNoise")
    raise TypeError(f"unsupported noise spec {type(spec).__name__}")


def noise_marginal_variance(spec: NoiseSpec, i: int, c: int) -> float:
    """Variance of the single noise entry ``(i, c)``."""
    if isinstance(spec, WhiteGaussian):
        return float(spec.cov[c, c])
    if isinstance(spec, JointGaussian):
        p = (i - 1) * spec.dim + c
        return float(spec.cov[p, p])
    if isinstance(spec, KLUniform):
        return float(spec.basis.step_variance()[i - 1])
    if isinstance(spec, CustomNoise):
        if spec.variance is not None:
            return float(spec.variance(i, c))
        paths = sample_noise_path(spec, i, np.random.default_rng(0), 4096)
        return float(np.var(paths[:, i - 1, c]))
    raise TypeError(f"unsupported noise spec {type(spec).__name__}")


def noise_step_covariance(spec: NoiseSpec, k: int = 1) -> np.ndarray:
    """Per-step covariance used by the Gaussian baselines (moment matching)."""
    if isinstance(spec, WhiteGaussian):
        return spec.cov
    if isinstance(spec, JointGaussian):
        sl = slice((k - 1) * spec.dim, k * spec.dim)
        return spec.cov[sl, sl]
    return np.array([[noise_marginal_variance(spec, k, c) for c in range(spec.dim)]]).reshape(spec.dim, spec.dim)


# ---------------------------------------------------------------------------
# Initial state and trajectories


@dataclass(frozen=True)
class GaussianInit:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = _check_covariance(self.cov, "initial covariance")
        if cov.shape[0] != mean.size:
            raise ValueError("initial mean/covariance size mismatch")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = _size_tuple(size)
        if not np.any(self.cov):
            return np.broadcast_to(self.mean, shape + (self.dim,)).copy()
        return self.mean + rng.standard_normal(shape + (self.dim,)) @ _psd_sqrt(self.cov).T


@dataclass(frozen=True)
class CustomInit:
    dim: int
    sampler: Callable
    log_pdf: Optional[Callable] = None

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = _size_tuple(size)
        out = np.asarray(self.sampler(rng, shape), dtype=float)
        return out.reshape(shape + (self.dim,))


InitialStateSpec = Union[GaussianInit, CustomInit]


@dataclass(frozen=True)
class Trajectory:
    """States ``x_0..x_K`` (shape ``(K+1, n_x)``) and measurements ``y_1..y_K``."""

    states: np.ndarray
    measurements: np.ndarray
    process_noise: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        meas = np.asarray(self.measurements, dtype=float)
        if states.ndim != 2 or meas.ndim != 2:
            raise ValueError("states and measurements must be 2-D")
        if states.shape[0] != meas.shape[0] + 1:
            raise ValueError("need K+1 states for K measurements")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "measurements", meas)

    @property
    def horizon(self) -> int:
        return self.measurements.shape[0]


def propagate(model: SystemModel, x0: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Run the recursion for a batch of initial states and noise paths.

    ``x0`` is ``(..., n_x)``, ``noise`` is ``(..., K, n_w)``; returns
    ``(..., K+1, n_x)``.
    """
    K = noise.shape[-2]
    states = np.empty(x0.shape[:-1] + (K + 1, model.state_dim))
    states[..., 0, :] = x0
    for k in range(K):
        states[..., k + 1, :] = evaluate_transition(model, k, states[..., k, :], noise[..., k, :])
    return states


def simulate_truth(
    model: SystemModel,
    init: InitialStateSpec,
    proc: NoiseSpec,
    meas: NoiseSpec,
    K: int,
    rng: np.random.Generator,
) -> Trajectory:
    """Simulate one ground-truth trajectory with noisy measurements."""
    if K < 1:
        raise ValueError("horizon K must be >= 1")
    x0 = init.sample(rng)
    w = sample_noise_path(proc, K, rng)
    v = sample_noise_path(meas, K, rng)
    states = propagate(model, x0, w)
    pred = np.stack([evaluate_measurement(model, i, states[i]) for i in range(1, K + 1)])
    return Trajectory(states=states, measurements=pred + v, process_noise=w)
