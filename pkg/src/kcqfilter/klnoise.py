"""Karhunen-Loeve construction of correlated uniform-driven noise.

The process is ``w_k = mean + sum_n xi_n sqrt(lam_n) f_{n,k}`` with the
``xi_n`` independent and uniform on ``[-sqrt(30), sqrt(30)]`` (variance 10),
and ``(lam_n, f_n)`` the leading eigenpairs of a squared-exponential
correlation matrix over the discrete horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "KLBasis",
    "Histogram",
    "build_correlation",
    "kl_spectrum",
    "kl_decompose",
    "kl_reconstruct",
    "kl_sample_path",
    "empirical_density",
    "gaussian_pdf",
    "gaussianity_distance",
    "conditional_samples",
    "density_sup_distance",
]

XI_HALF_WIDTH = np.sqrt(30.0)


def build_correlation(K: int, length_scale: float = 15.0) -> np.ndarray:
    """``rho(i, j) = exp(-((i - j) / length_scale)^2)`` on ``i, j = 1..K``."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if length_scale <= 0:
        raise ValueError("length_scale must be positive")
    idx = np.arange(1, K + 1, dtype=float)
    lag = (idx[:, None] - idx[None, :]) / length_scale
    return np.exp(-(lag**2))


@dataclass(frozen=True)
class KLBasis:
    eigenvalues: np.ndarray  # (M,), strictly descending
    eigenvectors: np.ndarray  # (M, K), rows orthonormal
    xi_half_width: float = XI_HALF_WIDTH
    mean: float = 0.0
    full_eigenvalues: Optional[np.ndarray] = None

    @property
    def order(self) -> int:
        return self.eigenvalues.size

    @property
    def horizon(self) -> int:
        return self.eigenvectors.shape[1]

    @property
    def xi_variance(self) -> float:
        return self.xi_half_width**2 / 3.0

    @property
    def modes(self) -> np.ndarray:
        """``sqrt(lam_n) f_{n,k}``, shape ``(M, K)``."""
        return np.sqrt(self.eigenvalues)[:, None] * self.eigenvectors

    def step_variance(self) -> np.ndarray:
        """Exact per-step variance of the truncated expansion."""
        return self.xi_variance * np.sum(self.modes**2, axis=0)

    def amplitude_bound(self) -> np.ndarray:
        """Hard bound on ``|w_k - mean|`` implied by the bounded ``xi``."""
        return self.xi_half_width * np.sum(np.abs(self.modes), axis=0)


def kl_spectrum(R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition, descending, eigenvectors as rows.

    Sign convention: the first component with magnitude above 1e-12 is positive.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError("correlation matrix must be square")
    if not np.allclose(R, R.T, atol=1e-12, rtol=0.0):
        raise ValueError("correlation matrix is not symmetric")
    vals, vecs = np.linalg.eigh(R)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order].T.copy()
    for row in vecs:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return vals, vecs


def kl_decompose(R: np.ndarray, M: int, mean: float = 0.0, xi_half_width: float = XI_HALF_WIDTH) -> KLBasis:
    """Keep the top ``M`` eigenpairs of ``R``.

    Eigenvalues must be strictly descending and positive over the kept range
    (and separated from the first discarded one); near-ties within 1e-12 are
    rejected because the truncated basis would not be unique.
    """
    R = np.asarray(R, dtype=float)
    K = R.shape[0] if R.ndim == 2 else 0
    if not 1 <= M <= K:
        raise ValueError(f"order M={M} must satisfy 1 <= M <= K={K}")
    vals, vecs = kl_spectrum(R)
    kept = vals[: M + 1] if M < K else vals
    gaps = -np.diff(kept)
    if np.any(gaps <= 1e-12):
        n = int(np.argmax(gaps <= 1e-12)) + 1
        raise ValueError(
            f"eigenvalues {n} and {n + 1} coincide within 1e-12; "
            "the expansion requires strictly decreasing eigenvalues"
        )
    if vals[M - 1] <= 0:
        raise ValueError("kept eigenvalues must be positive")
    return KLBasis(
        eigenvalues=vals[:M].copy(),
        eigenvectors=vecs[:M].copy(),
        xi_half_width=xi_half_width,
        mean=float(mean),
        full_eigenvalues=vals,
    )


def kl_reconstruct(eigenvalues: np.ndarray, eigenvectors: np.ndarray, M: int) -> np.ndarray:
    """``sum_{n<=M} lam_n f_n f_n^T``."""
    lam = eigenvalues[:M]
    f = eigenvectors[:M]
    return (f.T * lam) @ f


def kl_sample_path(basis: KLBasis, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw paths ``w_1..w_K``; shape ``size + (K,)``."""
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    xi = rng.uniform(-basis.xi_half_width, basis.xi_half_width, shape + (basis.order,))
    return basis.mean + xi @ basis.modes


# ---------------------------------------------------------------------------
# Empirical densities


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    count: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def integral(self) -> float:
        return float(np.sum(self.density * self.widths))


def empirical_density(samples, bin_count: int, range: Optional[tuple[float, float]] = None) -> Histogram:
    """Normalized histogram of ``samples``.

    Samples outside ``range`` are dropped before normalizing, so the result
    always integrates to one over the given range.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    if bin_count < 2:
        raise ValueError("need at least 2 bins")
    lo, hi = (x.min(), x.max()) if range is None else range
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        raise ValueError(f"degenerate histogram range ({lo}, {hi})")
    counts, edges = np.histogram(x, bins=bin_count, range=(lo, hi))
    total = counts.sum()
    if total == 0:
        raise ValueError("no samples fall inside the histogram range")
    return Histogram(edges=edges, density=counts / (total * np.diff(edges)), count=int(total))


def gaussian_pdf(x, mean: float, var: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def gaussianity_distance(samples, bin_count: int = 100) -> tuple[float, Histogram, np.ndarray]:
    """Sup-distance between the histogram and its moment-matched Gaussian.

    Returns the distance, the histogram and the Gaussian density at the bin
    centers.
    """
    x = np.asarray(samples, dtype=float).ravel()
    hist = empirical_density(x, bin_count)
    gauss = gaussian_pdf(hist.centers, x.mean(), x.var())
    return float(np.max(np.abs(hist.density - gauss))), hist, gauss


def conditional_samples(columns: np.ndarray, conditions: dict[int, float], width: float, target: int) -> np.ndarray:
    """Values of column ``target`` among rows whose conditioned columns fall
    within ``+-width/2`` of the given values."""
    mask = np.ones(columns.shape[0], dtype=bool)
    for col, value in conditions.items():
        mask &= np.abs(columns[:, col] - value) <= 0.5 * width
    return columns[mask, target]


def density_sup_distance(a, b, bin_count: int, range: Optional[tuple[float, float]] = None):
    """Sup-distance between two histograms on a shared grid.

    Returns ``(distance, hist_a, hist_b)``.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if range is None:
        both = np.concatenate([a, b])
        range = (float(both.min()), float(both.max()))
    ha = empirical_density(a, bin_count, range)
    hb = empirical_density(b, bin_count, range)
    return float(np.max(np.abs(ha.density - hb.density))), ha, hb
