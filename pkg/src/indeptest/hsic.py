"""Kernel independence tests: QHSIC, NyHSIC, FoHSIC, and NFSIC.

QHSIC is the quadratic-time HSIC V-statistic with a permutation null.
NyHSIC and FoHSIC replace the implicit kernel with explicit feature maps
(Nystrom / random Fourier) and simulate the null from the eigenvalues of the
empirical covariance of per-sample feature outer products. NFSIC optimizes a
small set of witness locations on a held-out half and tests on the rest with
a permutation null.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import config as _numba_config
from numba import njit, prange

from .kernels import (
    FeatureMap,
    gram_matrix,
    kernel_cross,
    median_distance_from_squared,
    median_heuristic,
    rff_features,
    nystrom_features,
    squared_distances,
)
from .result import TestResult

_numba_config.THREADING_LAYER = "workqueue"

# linear-time tests cap the median-heuristic pair count by subsampling
MEDIAN_SUBSAMPLE_CAP = 1000

# permutation engine: switch to low-rank Gram factors when they converge
# at small rank; the branch depends only on kernel spectra, which are
# invariant under row permutations, so the permutation test stays exact
_LOWRANK_TOL = 1e-12
_LOWRANK_MAX_RANK = 500
_LOWRANK_FLOP_FACTOR = 3


@dataclass(frozen=True)
class ApproxNullConfig:
    """Number of draws used to simulate the feature-HSIC null distribution."""

    null_draw_count: int = 2000

    def __post_init__(self):
        if self.null_draw_count < 100:
            raise ValueError(f"need at least 100 null draws, got {self.null_draw_count}")


@dataclass(frozen=True)
class NullSpectrum:
    """Non-negative eigenvalues defining a weighted chi-square null law."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1:
            raise ValueError("eigenvalues must be a 1-D sequence")
        if lam.size and lam.min() < -1e-10:
            raise ValueError(f"eigenvalue {lam.min()} below tolerance")
        object.__setattr__(self, "eigenvalues", np.maximum(lam, 0.0))


@dataclass(frozen=True)
class NfsicConfig:
    n_features: int = 10
    ridge: float = 1e-5
    permutations: int = 500
    search_budget: int = 200

    def __post_init__(self):
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.permutations < 1:
            raise ValueError("permutations must be >= 1")
        if self.search_budget < 1:
            raise ValueError("search_budget must be >= 1")


def _as_matrix(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    return Z


def _double_center(K: np.ndarray) -> np.ndarray:
    row_means = K.mean(axis=0)
    grand = row_means.mean()
    return K - row_means[None, :] - row_means[:, None] + grand


def hsic_v_statistic(K: np.ndarray, L: np.ndarray) -> float:
    """Biased (V-statistic) HSIC: trace(K H L H) / n^2 for centering H.

    K and L must be symmetric Gram matrices of equal size. The value is
    clipped at zero against floating-point round-off.
    """
    K = np.asarray(K, dtype=float)
    L = np.asarray(L, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"K must be square, got shape {K.shape}")
    if L.shape != K.shape:
        raise ValueError(f"Gram shapes differ: {K.shape} vs {L.shape}")
    n = K.shape[0]
    # trace(KHLH) = <HKH, L> for symmetric L, so one centering suffices
    val = float(np.sum(_double_center(K) * L)) / (n * n)
    return max(val, 0.0)


def _feature_stat_from_centered(phi_c: np.ndarray, psi_c: np.ndarray) -> float:
    n = phi_c.shape[0]
    cross = phi_c.T @ psi_c / n
    return float(np.sum(cross * cross))


def feature_hsic_statistic(phi, psi) -> float:
    """Squared Frobenius norm of the empirical feature cross-covariance.

    Accepts FeatureMap objects or plain n x m arrays. Columns are centered
    internally; the cost is O(n * m_x * m_y).
    """
    phi = phi.features if isinstance(phi, FeatureMap) else _as_matrix(phi)
    psi = psi.features if isinstance(psi, FeatureMap) else _as_matrix(psi)
    if phi.shape[0] != psi.shape[0]:
        raise ValueError(f"row counts differ: {phi.shape[0]} vs {psi.shape[0]}")
    return _feature_stat_from_centered(phi - phi.mean(axis=0), psi - psi.mean(axis=0))


def permutation_pvalue(statistic_fn, X, Y, permutations: int, seed) -> float:
    """One-sided permutation p-value (1 + #{t_b >= t_0}) / (B + 1).

    Only the rows of Y are permuted; ties count as exceedances, so the
    p-value lies in [1/(B+1), 1] and the test is exact under exchangeability.
    """
    if permutations < 1:
        raise ValueError("need at least one permutation")
    X = np.asarray(X)
    Y = np.asarray(Y)
    rng = np.random.default_rng(seed)
    t_obs = float(statistic_fn(X, Y))
    n = Y.shape[0]
    exceed = 0
    for _ in range(permutations):
        perm = rng.permutation(n)
        if float(statistic_fn(X, Y[perm])) >= t_obs:
            exceed += 1
    return (1 + exceed) / (permutations + 1)


# ---------------------------------------------------------------------------
# permutation engine for the quadratic test


@njit(parallel=True, cache=True)
def _permuted_trace_sums(Kc, Lc, perms):  # pragma: no cover - compiled
    n_perm, n = perms.shape
    out = np.empty(n_perm)
    for b in prange(n_perm):
        p = perms[b]
        total = 0.0
        for i in range(n):
            k_row = Kc[i]
            l_row = Lc[p[i]]
            s = 0.0
            for j in range(n):
                s += k_row[j] * l_row[p[j]]
            total += s
        out[b] = total
    return out


def _pivoted_cholesky(A: np.ndarray, tol: float, max_rank: int):
    """Greedy partial Cholesky A ~= G G^T for PSD A.

    Returns (G, converged); converged means the residual trace fell below
    tol times the original trace within max_rank columns.
    """
    n = A.shape[0]
    cap = min(max_rank, n)
    d = np.diagonal(A).astype(float).copy()
    target = max(tol * float(d.sum()), 0.0)
    G = np.zeros((n, cap))
    for k in range(cap):
        i = int(np.argmax(d))
        if d[i] <= target:
            return G[:, :k], True
        G[:, k] = (A[:, i] - G[:, :k] @ G[i, :k]) / np.sqrt(d[i])
        d -= G[:, k] ** 2
        d[i] = 0.0
    return G, bool(d.max() <= target)


def _lowrank_trace_sums(G: np.ndarray, F: np.ndarray, perms: np.ndarray) -> np.ndarray:
    Gt = np.ascontiguousarray(G.T)
    out = np.empty(perms.shape[0])
    for b in range(perms.shape[0]):
        cross = Gt @ F[perms[b]]
        out[b] = np.einsum("ij,ij->", cross, cross)
    return out


def _permutation_trace_engine(Kc: np.ndarray, Lc: np.ndarray, perms: np.ndarray) -> np.ndarray:
    """trace(Kc P Lc P^T) for each permutation row, via the cheaper route."""
    n = Kc.shape[0]
    G, ok_g = _pivoted_cholesky(Kc, _LOWRANK_TOL, _LOWRANK_MAX_RANK)
    if ok_g:
        F, ok_f = _pivoted_cholesky(Lc, _LOWRANK_TOL, _LOWRANK_MAX_RANK)
        if ok_f and G.shape[1] * F.shape[1] <= _LOWRANK_FLOP_FACTOR * n:
            return _lowrank_trace_sums(G, F, perms)
    return _permuted_trace_sums(Kc, Lc, np.ascontiguousarray(perms, dtype=np.int64))


def _centered_gram_and_bandwidth(Z: np.ndarray):
    """Shared squared-distance buffer: median bandwidth, then in-place Gram."""
    d2 = squared_distances(Z)
    med = median_distance_from_squared(d2)
    sigma = med if med > 0.0 else 1.0
    d2 *= -1.0 / (2.0 * sigma * sigma)
    K = np.exp(d2, out=d2)
    return _double_center(K), sigma


def qhsic_test(X, Y, alpha: float = 0.05, permutations: int = 500, seed=0) -> TestResult:
    """Quadratic-time HSIC test with a permutation null.

    Bandwidths come from the median heuristic on each variable's full sample.
    Permuted statistics are evaluated either exactly or through low-rank Gram
    factors accurate to ~1e-12 relative trace; the choice is permutation
    invariant so the level guarantee is unaffected.
    """
    start = time.perf_counter()
    X = _as_matrix(X)
    Y = _as_matrix(Y)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise ValueError(f"X and Y must have the same number of rows, got {n} and {Y.shape[0]}")
    if n < 4:
        raise ValueError(f"need at least 4 samples, got {n}")
    if permutations < 1:
        raise ValueError("need at least one permutation")

    Kc, sigma_x = _centered_gram_and_bandwidth(X)
    Lc, sigma_y = _centered_gram_and_bandwidth(Y)
    statistic = max(float(np.sum(Kc * Lc)), 0.0) / (n * n)

    rng = np.random.default_rng(seed)
    perms = np.empty((permutations + 1, n), dtype=np.int64)
    perms[0] = np.arange(n)
    for b in range(1, permutations + 1):
        perms[b] = rng.permutation(n)
    traces = _permutation_trace_engine(Kc, Lc, perms)
    p_value = (1 + int(np.sum(traces[1:] >= traces[0]))) / (permutations + 1)

    runtime_ms = (time.perf_counter() - start) * 1e3
    return TestResult(
        method="qhsic",
        statistic=statistic,
        p_value=p_value,
        reject=p_value <= alpha,
        level=alpha,
        n_used=n,
        runtime_ms=runtime_ms,
        details={
            "permutations": permutations,
            "bandwidth_x": sigma_x,
            "bandwidth_y": sigma_y,
        },
    )


# ---------------------------------------------------------------------------
# linear-time feature tests


def eigen_null_spectrum(phi_centered: np.ndarray, psi_centered: np.ndarray) -> NullSpectrum:
    """Null spectrum for n * feature_hsic_statistic from centered features.

    Builds the per-sample vectorized outer products w_i and returns the
    eigenvalues of their empirical covariance (1/n normalization). The
    statistic is asymptotically distributed as sum_k lambda_k z_k^2 under
    independence. Guarded at m_x * m_y <= 10^4.
    """
    phi_centered = np.asarray(phi_centered, dtype=float)
    psi_centered = np.asarray(psi_centered, dtype=float)
    if phi_centered.shape[0] != psi_centered.shape[0]:
        raise ValueError("row counts differ")
    m_x = phi_centered.shape[1]
    m_y = psi_centered.shape[1]
    if m_x * m_y > 10_000:
        raise ValueError(f"feature product {m_x * m_y} exceeds the 10^4 guard")
    n = phi_centered.shape[0]
    w = (phi_centered[:, :, None] * psi_centered[:, None, :]).reshape(n, m_x * m_y)
    w -= w.mean(axis=0)
    singular = np.linalg.svd(w, compute_uv=False)
    return NullSpectrum(singular * singular / n)


def sample_eigen_null(spectrum: NullSpectrum, n_draws: int, seed) -> np.ndarray:
    """Draws of sum_k lambda_k z_k^2 with z_k i.i.d. standard normal."""
    if n_draws < 1:
        raise ValueError("need at least one draw")
    lam = spectrum.eigenvalues
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_draws, lam.size))
    return (z * z) @ lam


def _capped_median(Z: np.ndarray, rng: np.random.Generator) -> float:
    """Median heuristic on at most MEDIAN_SUBSAMPLE_CAP points (keeps O(n))."""
    n = Z.shape[0]
    if n <= MEDIAN_SUBSAMPLE_CAP:
        return median_heuristic(Z)
    idx = rng.choice(n, MEDIAN_SUBSAMPLE_CAP, replace=False)
    return median_heuristic(Z[idx])


def approx_hsic_test(
    X,
    Y,
    alpha: float = 0.05,
    kind: str = "nystrom",
    m: int = 10,
    null_draws: int = 2000,
    seed=0,
) -> TestResult:
    """NyHSIC / FoHSIC: n * feature HSIC against a simulated eigen-null.

    kind="nystrom" samples m inducing points per variable without replacement
    from that variable's own rows; kind="fourier" uses m random cos/sin
    feature pairs per variable. The p-value is (1 + #{draws >= stat}) /
    (null_draws + 1). The eigen-null is asymptotic: intended for n well above
    m (say n >= 4m), though any n >= m runs (m = n recovers the exact Gram).
    """
    start = time.perf_counter()
    if kind not in ("nystrom", "fourier"):
        raise ValueError(f"kind must be 'nystrom' or 'fourier', got {kind!r}")
    ApproxNullConfig(null_draws)
    X = _as_matrix(X)
    Y = _as_matrix(Y)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise ValueError("X and Y must have the same number of rows")
    if m < 1:
        raise ValueError("m must be >= 1")
    if n < m:
        raise ValueError(f"n={n} too small relative to m={m}")

    rng = np.random.default_rng(seed)
    sigma_x = _capped_median(X, rng)
    sigma_y = _capped_median(Y, rng)
    if kind == "nystrom":
        phi = nystrom_features(X, sigma_x, X[rng.choice(n, m, replace=False)])
        psi = nystrom_features(Y, sigma_y, Y[rng.choice(n, m, replace=False)])
    else:
        phi = rff_features(X, sigma_x, m, rng)
        psi = rff_features(Y, sigma_y, m, rng)

    phi_c = phi.features - phi.features.mean(axis=0)
    psi_c = psi.features - psi.features.mean(axis=0)
    statistic = n * _feature_stat_from_centered(phi_c, psi_c)
    draws = sample_eigen_null(eigen_null_spectrum(phi_c, psi_c), null_draws, rng)
    p_value = (1 + int(np.sum(draws >= statistic))) / (null_draws + 1)

    runtime_ms = (time.perf_counter() - start) * 1e3
    return TestResult(
        method="nyhsic" if kind == "nystrom" else "fohsic",
        statistic=statistic,
        p_value=p_value,
        reject=p_value <= alpha,
        level=alpha,
        n_used=n,
        runtime_ms=runtime_ms,
        details={
            "kind": kind,
            "m": m,
            "null_draws": null_draws,
            "bandwidth_x": sigma_x,
            "bandwidth_y": sigma_y,
        },
    )


# ---------------------------------------------------------------------------
# NFSIC


def _nfsic_from_kernel_features(a_raw: np.ndarray, b_raw: np.ndarray, ridge: float) -> float:
    """Normalized statistic from raw witness-kernel matrices (n x J each)."""
    n = a_raw.shape[0]
    a = a_raw - a_raw.mean(axis=0)
    b = b_raw - b_raw.mean(axis=0)
    r = a * b
    u = r.mean(axis=0)
    r_c = r - u
    cov = r_c.T @ r_c / n
    cov[np.diag_indices_from(cov)] += ridge
    stat = n * float(u @ np.linalg.solve(cov, u))
    return max(stat, 0.0)


def nfsic_statistic(X, Y, V, W, sigma_x: float, sigma_y: float, ridge: float) -> float:
    """Normalized finite-set independence statistic at witness locations V, W.

    For each of the J locations, the per-sample product of centered kernel
    evaluations is formed; the statistic is n * u^T (Cov + ridge I)^{-1} u
    where u is the mean product vector. With ridge = 0 a singular covariance
    raises numpy.linalg.LinAlgError.
    """
    X = _as_matrix(X)
    Y = _as_matrix(Y)
    V = _as_matrix(V)
    W = _as_matrix(W)
    if V.shape[0] != W.shape[0]:
        raise ValueError("V and W must hold the same number of locations")
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must have the same number of rows")
    a_raw = kernel_cross(X, V, sigma_x)
    b_raw = kernel_cross(Y, W, sigma_y)
    return _nfsic_from_kernel_features(a_raw, b_raw, ridge)


def optimize_features(X_train, Y_train, config: NfsicConfig, seed, return_trace: bool = False):
    """Seeded random search for witness locations and bandwidths.

    Each candidate takes J training rows with Gaussian jitter of scale
    0.2 * median distance and bandwidths median * 2^g with g uniform on
    {-2,...,2} per variable; the candidate maximizing the training statistic
    wins. Fully degenerate training data (zero median distances on both
    sides) short-circuits to unjittered rows with bandwidth 1.0.
    """
    X_train = _as_matrix(X_train)
    Y_train = _as_matrix(Y_train)
    n = X_train.shape[0]
    J = config.n_features
    if n < 4 * J:
        raise ValueError(f"training half of size {n} too small for {J} features (need 4J)")

    med_x = median_distance_from_squared(squared_distances(X_train[: MEDIAN_SUBSAMPLE_CAP]))
    med_y = median_distance_from_squared(squared_distances(Y_train[: MEDIAN_SUBSAMPLE_CAP]))
    if med_x == 0.0 and med_y == 0.0:
        result = (X_train[:J].copy(), Y_train[:J].copy(), 1.0, 1.0)
        return (result, np.zeros(0)) if return_trace else result
    base_x = med_x if med_x > 0 else 1.0
    base_y = med_y if med_y > 0 else 1.0

    rng = np.random.default_rng(seed)
    best = None
    best_stat = -np.inf
    trace = np.empty(config.search_budget)
    for c in range(config.search_budget):
        idx = rng.choice(n, J, replace=False)
        V = X_train[idx] + 0.2 * med_x * rng.standard_normal((J, X_train.shape[1]))
        W = Y_train[idx] + 0.2 * med_y * rng.standard_normal((J, Y_train.shape[1]))
        sigma_x = base_x * 2.0 ** rng.integers(-2, 3)
        sigma_y = base_y * 2.0 ** rng.integers(-2, 3)
        stat = nfsic_statistic(X_train, Y_train, V, W, sigma_x, sigma_y, config.ridge)
        trace[c] = stat
        if stat > best_stat:
            best_stat = stat
            best = (V, W, sigma_x, sigma_y)
    return (best, trace) if return_trace else best


def nfsic_test(X, Y, alpha: float = 0.05, config: NfsicConfig | None = None, seed=0) -> TestResult:
    """NFSIC: optimize witnesses on a shuffled half, permutation-test the rest.

    The permutation p-value is computed on the held-out half only, with the
    selected locations and bandwidths held fixed, so conditional exactness of
    the permutation null applies. n_used is the tested half, floor(n/2).
    """
    start = time.perf_counter()
    config = config or NfsicConfig()
    X = _as_matrix(X)
    Y = _as_matrix(Y)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise ValueError("X and Y must have the same number of rows")
    if n < 8 * config.n_features:
        raise ValueError(f"n={n} too small for {config.n_features} features (need 8J)")

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_test = n // 2
    train, test = order[: n - n_test], order[n - n_test :]
    V, W, sigma_x, sigma_y = optimize_features(X[train], Y[train], config, rng)

    a_raw = kernel_cross(X[test], V, sigma_x)
    b_raw = kernel_cross(Y[test], W, sigma_y)
    stat_fn = lambda a, b: _nfsic_from_kernel_features(a, b, config.ridge)
    statistic = stat_fn(a_raw, b_raw)
    p_value = permutation_pvalue(stat_fn, a_raw, b_raw, config.permutations, rng)

    runtime_ms = (time.perf_counter() - start) * 1e3
    return TestResult(
        method="nfsic",
        statistic=statistic,
        p_value=p_value,
        reject=p_value <= alpha,
        level=alpha,
        n_used=n_test,
        runtime_ms=runtime_ms,
        details={
            "n_features": config.n_features,
            "permutations": config.permutations,
            "search_budget": config.search_budget,
            "ridge": config.ridge,
            "n_train": int(n - n_test),
            "bandwidth_x": sigma_x,
            "bandwidth_y": sigma_y,
        },
    )
