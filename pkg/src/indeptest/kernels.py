"""Gaussian kernel, bandwidth selection, and explicit feature-map approximations.

The kernel is parameterized as k(x, x') = exp(-||x - x'||^2 / (2 sigma^2)).
Random Fourier features draw frequencies from the kernel's spectral measure
(normal with per-coordinate standard deviation 1/sigma); Nystrom features are
K_xz @ K_zz^{-1/2} with a pseudo-inverse square root that clips eigenvalues
below a relative tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# relative eigenvalue cutoff for the Nystrom pseudo-inverse square root
NYSTROM_EIG_TOL = 1e-10


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel parameter (bandwidth sigma, in input units)."""

    bandwidth: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")


@dataclass(frozen=True)
class FeatureMap:
    """Explicit n x m feature matrix standing in for an implicit kernel.

    kind is "fourier" or "nystrom". Fourier rows have unit squared norm by
    construction (paired cos/sin columns).
    """

    features: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("fourier", "nystrom"):
            raise ValueError(f"unknown feature map kind: {self.kind!r}")
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2 or feats.shape[1] < 1:
            raise ValueError("features must be an n x m matrix with m >= 1")
        if not np.isfinite(feats).all():
            raise ValueError("feature map contains non-finite entries")
        object.__setattr__(self, "features", feats)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"expected an n x d matrix, got shape {X.shape}")
    return X


def squared_distances(X: np.ndarray, Z: np.ndarray | None = None) -> np.ndarray:
    """All pairwise squared Euclidean distances, clipped at zero.

    Uses the dot-product expansion so the cost is one matrix product; with
    Z=None computes the symmetric n x n matrix of X against itself.
    """
    X = _as_matrix(X)
    sq_x = np.einsum("ij,ij->i", X, X)
    if Z is None:
        d2 = sq_x[:, None] + sq_x[None, :] - 2.0 * (X @ X.T)
    else:
        Z = _as_matrix(Z)
        if Z.shape[1] != X.shape[1]:
            raise ValueError("X and Z must have the same number of columns")
        sq_z = np.einsum("ij,ij->i", Z, Z)
        d2 = sq_x[:, None] + sq_z[None, :] - 2.0 * (X @ Z.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def median_distance_from_squared(d2: np.ndarray) -> float:
    """Median of the upper-triangle distances of a squared-distance matrix."""
    n = d2.shape[0]
    m = n * (n - 1) // 2
    buf = np.empty(m)
    pos = 0
    for i in range(n - 1):
        row = d2[i, i + 1 :]
        buf[pos : pos + row.size] = row
        pos += row.size
    np.sqrt(buf, out=buf)
    return float(np.median(buf))


def median_heuristic(X: np.ndarray) -> float:
    """Median of all n(n-1)/2 pairwise Euclidean distances.

    Falls back to 1.0 when the median distance is zero (all points equal).
    Requires n >= 2.
    """
    X = _as_matrix(X)
    if X.shape[0] < 2:
        raise ValueError(f"median heuristic needs at least 2 points, got {X.shape[0]}")
    if not np.isfinite(X).all():
        raise ValueError("input contains non-finite coordinates")
    med = median_distance_from_squared(squared_distances(X))
    return med if med > 0.0 else 1.0


def gram_matrix(X: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian Gram matrix K_ij = exp(-||x_i - x_j||^2 / (2 sigma^2))."""
    if not sigma > 0:
        raise ValueError(f"bandwidth must be positive, got {sigma}")
    X = _as_matrix(X)
    if not np.isfinite(X).all():
        raise ValueError("input contains non-finite coordinates")
    d2 = squared_distances(X)
    d2 *= -1.0 / (2.0 * sigma * sigma)
    K = np.exp(d2, out=d2)
    # exact symmetry and unit diagonal despite dot-trick rounding
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return K


def kernel_cross(X: np.ndarray, Z: np.ndarray, sigma: float) -> np.ndarray:
    """Rectangular kernel matrix k(x_i, z_j)."""
    if not sigma > 0:
        raise ValueError(f"bandwidth must be positive, got {sigma}")
    d2 = squared_distances(X, Z)
    d2 *= -1.0 / (2.0 * sigma * sigma)
    return np.exp(d2, out=d2)


def rff_features(X: np.ndarray, sigma: float, n_pairs: int, seed) -> FeatureMap:
    """Random Fourier feature map with n_pairs cos/sin column pairs (m = 2 * n_pairs).

    Frequencies are drawn i.i.d. normal with standard deviation 1/sigma per
    coordinate; row i is (1/sqrt(D)) * (cos(w_k . x_i), sin(w_k . x_i)) for
    k = 1..D, so every row has squared norm exactly 1. Deterministic given seed.
    """
    if not sigma > 0:
        raise ValueError(f"bandwidth must be positive, got {sigma}")
    if n_pairs < 1:
        raise ValueError(f"need at least one feature pair, got {n_pairs}")
    X = _as_matrix(X)
    rng = np.random.default_rng(seed)
    freqs = rng.standard_normal((X.shape[1], n_pairs)) / sigma
    proj = X @ freqs
    scale = 1.0 / np.sqrt(n_pairs)
    feats = np.empty((X.shape[0], 2 * n_pairs))
    feats[:, 0::2] = np.cos(proj) * scale
    feats[:, 1::2] = np.sin(proj) * scale
    return FeatureMap(feats, "fourier")


def nystrom_features(X: np.ndarray, sigma: float, Z: np.ndarray) -> FeatureMap:
    """Nystrom feature map K_xz @ K_zz^{-1/2} for inducing points Z (m columns).

    The inverse square root is the symmetric pseudo-inverse: eigenvalues of
    K_zz below NYSTROM_EIG_TOL times the largest are clipped to zero, which
    keeps duplicated inducing points harmless.
    """
    X = _as_matrix(X)
    Z = _as_matrix(Z)
    if Z.shape[0] < 1:
        raise ValueError("need at least one inducing point")
    K_zz = gram_matrix(Z, sigma)
    eigvals, eigvecs = np.linalg.eigh(K_zz)
    cutoff = NYSTROM_EIG_TOL * float(eigvals[-1])
    inv_sqrt = np.where(eigvals > cutoff, 1.0 / np.sqrt(np.maximum(eigvals, cutoff)), 0.0)
    root = (eigvecs * inv_sqrt[None, :]) @ eigvecs.T
    feats = kernel_cross(X, Z, sigma) @ root
    return FeatureMap(feats, "nystrom")
