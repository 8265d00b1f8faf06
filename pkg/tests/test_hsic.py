import math

import numpy as np
import pytest

from indeptest.hsic import (
    ApproxNullConfig,
    NfsicConfig,
    NullSpectrum,
    approx_hsic_test,
    eigen_null_spectrum,
    feature_hsic_statistic,
    hsic_v_statistic,
    nfsic_statistic,
    nfsic_test,
    optimize_features,
    permutation_pvalue,
    qhsic_test,
    sample_eigen_null,
)
from indeptest.kernels import gram_matrix, median_heuristic
from indeptest.synth import sample_gaussian_sign, GaussianSignConfig


def vstat_oracle(K, L):
    """Literal trace(K H L H) / n^2 with an explicit centering matrix."""
    n = K.shape[0]
    H = np.eye(n) - np.ones((n, n)) / n
    return float(np.trace(K @ H @ L @ H)) / (n * n)


def centered_factor(K):
    """Exact feature factorization of HKH via eigendecomposition."""
    n = K.shape[0]
    H = np.eye(n) - np.ones((n, n)) / n
    Kc = H @ K @ H
    vals, vecs = np.linalg.eigh(Kc)
    vals = np.maximum(vals, 0.0)
    return vecs * np.sqrt(vals)[None, :]


class TestVStatistic:
    def test_constant_kernel_gives_zero(self):
        K = np.ones((6, 6))
        L = gram_matrix(np.random.default_rng(0).standard_normal((6, 1)), 1.0)
        assert hsic_v_statistic(K, L) == 0.0

    def test_two_point_closed_form(self):
        a = b = 0.5
        K = np.array([[1.0, a], [a, 1.0]])
        L = np.array([[1.0, b], [b, 1.0]])
        # symbolic expansion of trace(KHLH) at n=2: (1-a)(1-b)/4
        assert hsic_v_statistic(K, L) == pytest.approx(0.0625, abs=1e-14)
        assert vstat_oracle(K, L) == pytest.approx(0.0625, abs=1e-14)

    def test_matches_trace_oracle(self):
        rng = np.random.default_rng(1)
        for n in (5, 17, 60):
            K = gram_matrix(rng.standard_normal((n, 2)), 1.0)
            L = gram_matrix(rng.standard_normal((n, 1)), 0.8)
            assert hsic_v_statistic(K, L) == pytest.approx(vstat_oracle(K, L), rel=1e-10)

    def test_self_statistic_is_squared_frobenius(self):
        rng = np.random.default_rng(2)
        K = gram_matrix(rng.standard_normal((12, 1)), 1.0)
        n = 12
        H = np.eye(n) - np.ones((n, n)) / n
        expected = float(np.linalg.norm(H @ K @ H, "fro") ** 2) / (n * n)
        stat = hsic_v_statistic(K, K)
        assert stat >= 0.0
        assert stat == pytest.approx(expected, rel=1e-10)

    def test_invariant_to_constant_shift(self):
        rng = np.random.default_rng(3)
        K = gram_matrix(rng.standard_normal((9, 1)), 1.0)
        L = gram_matrix(rng.standard_normal((9, 1)), 1.0)
        base = hsic_v_statistic(K, L)
        assert hsic_v_statistic(K + 3.7, L) == pytest.approx(base, rel=1e-9, abs=1e-12)
        assert hsic_v_statistic(K, L - 1.2) == pytest.approx(base, rel=1e-9, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            hsic_v_statistic(np.eye(3), np.eye(4))


class TestFeatureStatistic:
    def test_constant_rows_give_zero(self):
        phi = np.ones((10, 3))
        psi = np.random.default_rng(4).standard_normal((10, 2))
        assert feature_hsic_statistic(phi, psi) == 0.0

    def test_matches_vstat_through_exact_factorization(self):
        rng = np.random.default_rng(5)
        K = gram_matrix(rng.standard_normal((25, 2)), 1.0)
        L = gram_matrix(rng.standard_normal((25, 1)), 1.2)
        phi = centered_factor(K)
        psi = centered_factor(L)
        assert feature_hsic_statistic(phi, psi) == pytest.approx(
            hsic_v_statistic(K, L), abs=1e-10
        )

    def test_one_dimensional_sign_features(self):
        signs = np.array([1.0, -1.0, 1.0, -1.0])[:, None]
        # centered columns equal the inputs; (mean of s_i^2)^2 = 1
        assert feature_hsic_statistic(signs, signs) == pytest.approx(1.0, abs=1e-14)

    def test_symmetry(self):
        rng = np.random.default_rng(6)
        phi = rng.standard_normal((30, 4))
        psi = rng.standard_normal((30, 2))
        assert feature_hsic_statistic(phi, psi) == pytest.approx(
            feature_hsic_statistic(psi, phi), rel=1e-12
        )

    def test_row_mismatch(self):
        with pytest.raises(ValueError):
            feature_hsic_statistic(np.ones((3, 1)), np.ones((4, 1)))


class TestPermutationPvalue:
    def test_constant_statistic_gives_one(self):
        X = np.arange(10.0)[:, None]
        Y = np.arange(10.0)[:, None]
        p = permutation_pvalue(lambda a, b: 1.0, X, Y, permutations=50, seed=0)
        assert p == 1.0

    def test_minimum_pvalue_when_observed_dominates(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(12)
        X = x[:, None]
        Y = x[:, None]  # perfectly matched; any permutation breaks the match

        def corr(a, b):
            return float(np.corrcoef(a.ravel(), b.ravel())[0, 1])

        p = permutation_pvalue(corr, X, Y, permutations=99, seed=1)
        assert p == pytest.approx(1.0 / 100.0)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((20, 1))
        Y = rng.standard_normal((20, 1))

        def stat(a, b):
            return abs(float(np.mean(a * b)))

        p1 = permutation_pvalue(stat, X, Y, permutations=200, seed=3)
        p2 = permutation_pvalue(stat, X, Y, permutations=200, seed=3)
        assert p1 == p2

    def test_super_uniform_under_null(self):
        # Monte-Carlo calibration: P(p <= alpha) <= alpha + 3 SE
        def stat(a, b):
            return abs(float(np.mean(a.ravel() * b.ravel())))

        reps = 2000
        n = 30
        pvals = np.empty(reps)
        for r in range(reps):
            rng = np.random.default_rng(10_000 + r)
            X = rng.standard_normal((n, 1))
            Y = rng.standard_normal((n, 1))
            pvals[r] = permutation_pvalue(stat, X, Y, permutations=60, seed=20_000 + r)
        for alpha in (0.01, 0.05, 0.10):
            rate = float(np.mean(pvals <= alpha))
            se = math.sqrt(alpha * (1 - alpha) / reps)
            assert rate <= alpha + 3 * se, f"alpha={alpha}: rate={rate}"


class TestQhsic:
    def test_rejects_linear_dependence(self):
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            x = rng.standard_normal(200)
            r = qhsic_test(x[:, None], x[:, None], alpha=0.05, seed=seed)
            assert r.reject, f"seed {seed} failed to reject"
            assert r.method == "qhsic"

    def test_statistic_matches_public_building_blocks(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((50, 2))
        Y = rng.standard_normal((50, 1))
        r = qhsic_test(X, Y, permutations=10, seed=0)
        K = gram_matrix(X, median_heuristic(X))
        L = gram_matrix(Y, median_heuristic(Y))
        assert r.statistic == pytest.approx(hsic_v_statistic(K, L), rel=1e-9)

    def test_pvalue_matches_generic_permutation_route(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((60, 1))
        Y = 0.5 * X + rng.standard_normal((60, 1))

        def stat(a, b):
            return hsic_v_statistic(
                gram_matrix(a, median_heuristic(a)), gram_matrix(b, median_heuristic(b))
            )

        seed = 42
        expected = permutation_pvalue(stat, X, Y, permutations=100, seed=seed)
        got = qhsic_test(X, Y, permutations=100, seed=seed).p_value
        assert got == pytest.approx(expected, abs=1e-12)

    def test_discrete_pvalue_floor(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((40, 1))
        Y = rng.standard_normal((40, 1))
        r = qhsic_test(X, Y, permutations=19, seed=5)
        assert r.p_value >= 1.0 / 20.0

    def test_deterministic(self):
        rng = np.random.default_rng(13)
        X = rng.standard_normal((80, 1))
        Y = rng.standard_normal((80, 1))
        r1 = qhsic_test(X, Y, seed=7)
        r2 = qhsic_test(X, Y, seed=7)
        assert r1.p_value == r2.p_value and r1.statistic == r2.statistic

    def test_level_calibration(self):
        reps = 500
        rejections = 0
        for r in range(reps):
            rng = np.random.default_rng(30_000 + r)
            X = rng.standard_normal((200, 1))
            Y = rng.standard_normal((200, 1))
            res = qhsic_test(X, Y, alpha=0.05, permutations=200, seed=40_000 + r)
            rejections += res.reject
        rate = rejections / reps
        assert 0.02 <= rate <= 0.08, f"empirical level {rate}"

    def test_too_small_sample(self):
        with pytest.raises(ValueError):
            qhsic_test(np.zeros((3, 1)), np.zeros((3, 1)))


class TestEigenNull:
    def test_single_feature_variance(self):
        rng = np.random.default_rng(14)
        phi = rng.standard_normal((100, 1))
        psi = rng.standard_normal((100, 1))
        phi -= phi.mean(0)
        psi -= psi.mean(0)
        spec = eigen_null_spectrum(phi, psi)
        assert spec.eigenvalues.size == 1
        assert spec.eigenvalues[0] == pytest.approx(float(np.var(phi[:, 0] * psi[:, 0])), rel=1e-10)

    def test_zero_features(self):
        spec = eigen_null_spectrum(np.zeros((10, 2)), np.zeros((10, 3)))
        assert np.all(spec.eigenvalues == 0.0)

    def test_trace_identity(self):
        rng = np.random.default_rng(15)
        phi = rng.standard_normal((60, 3))
        psi = rng.standard_normal((60, 4))
        phi -= phi.mean(0)
        psi -= psi.mean(0)
        spec = eigen_null_spectrum(phi, psi)
        w = (phi[:, :, None] * psi[:, None, :]).reshape(60, -1)
        total_var = float(np.var(w, axis=0).sum())
        assert float(spec.eigenvalues.sum()) == pytest.approx(total_var, rel=1e-8)

    def test_guard_on_feature_product(self):
        with pytest.raises(ValueError):
            eigen_null_spectrum(np.zeros((5, 101)), np.zeros((5, 101)))

    def test_spectrum_validation(self):
        with pytest.raises(ValueError):
            NullSpectrum(np.array([-1.0]))
        spec = NullSpectrum(np.array([-1e-12, 2.0]))
        assert spec.eigenvalues.min() >= 0.0


class TestSampleEigenNull:
    def test_zero_spectrum(self):
        draws = sample_eigen_null(NullSpectrum(np.zeros(3)), 100, seed=0)
        assert np.all(draws == 0.0)

    def test_unit_spectrum_moments(self):
        draws = sample_eigen_null(NullSpectrum(np.array([1.0])), 2000, seed=1)
        assert abs(float(draws.mean()) - 1.0) <= 0.1

    def test_non_negative(self):
        spec = NullSpectrum(np.array([0.5, 1.5, 0.1]))
        draws = sample_eigen_null(spec, 500, seed=2)
        assert draws.min() >= 0.0

    def test_deterministic(self):
        spec = NullSpectrum(np.array([1.0, 2.0]))
        a = sample_eigen_null(spec, 50, seed=3)
        b = sample_eigen_null(spec, 50, seed=3)
        assert np.array_equal(a, b)


class TestApproxHsic:
    def test_full_nystrom_matches_quadratic_statistic(self):
        rng = np.random.default_rng(16)
        X = rng.standard_normal((30, 1))
        Y = 0.8 * X + 0.2 * rng.standard_normal((30, 1))
        r = approx_hsic_test(X, Y, kind="nystrom", m=30, seed=4)
        exact = 30.0 * hsic_v_statistic(
            gram_matrix(X, median_heuristic(X)), gram_matrix(Y, median_heuristic(Y))
        )
        assert r.statistic == pytest.approx(exact, rel=1e-6)

    @pytest.mark.parametrize("kind,name", [("nystrom", "nyhsic"), ("fourier", "fohsic")])
    def test_rejects_linear_dependence(self, kind, name):
        for seed in range(10):
            rng = np.random.default_rng(200 + seed)
            x = rng.standard_normal(500)
            r = approx_hsic_test(x[:, None], x[:, None], kind=kind, seed=seed)
            assert r.reject, f"{kind} seed {seed}"
            assert r.method == name

    @pytest.mark.parametrize("kind", ["nystrom", "fourier"])
    def test_level_calibration(self, kind):
        reps = 500
        rejections = 0
        for r in range(reps):
            rng = np.random.default_rng(50_000 + r)
            X = rng.standard_normal((500, 1))
            Y = rng.standard_normal((500, 1))
            res = approx_hsic_test(X, Y, alpha=0.05, kind=kind, seed=60_000 + r)
            rejections += res.reject
        rate = rejections / reps
        assert 0.02 <= rate <= 0.09, f"{kind} empirical level {rate}"

    def test_sample_size_guard(self):
        with pytest.raises(ValueError):
            approx_hsic_test(np.zeros((9, 1)), np.zeros((9, 1)), m=10)

    def test_null_draw_guard(self):
        with pytest.raises(ValueError):
            ApproxNullConfig(50)

    def test_deterministic(self):
        rng = np.random.default_rng(17)
        X = rng.standard_normal((100, 2))
        Y = rng.standard_normal((100, 1))
        a = approx_hsic_test(X, Y, kind="fourier", seed=9)
        b = approx_hsic_test(X, Y, kind="fourier", seed=9)
        assert a.p_value == b.p_value and a.statistic == b.statistic


class TestNfsicStatistic:
    def test_constant_x_gives_zero(self):
        rng = np.random.default_rng(18)
        X = np.ones((40, 1))
        Y = rng.standard_normal((40, 1))
        V = np.zeros((3, 1))
        W = rng.standard_normal((3, 1))
        # constant kernel columns center to ~0 up to 1-ulp mean round-off
        assert nfsic_statistic(X, Y, V, W, 1.0, 1.0, 1e-5) == pytest.approx(0.0, abs=1e-30)

    def test_single_feature_scalar_reduction(self):
        rng = np.random.default_rng(19)
        X = rng.standard_normal((60, 1))
        Y = rng.standard_normal((60, 1))
        V = rng.standard_normal((1, 1))
        W = rng.standard_normal((1, 1))
        gamma = 1e-4
        got = nfsic_statistic(X, Y, V, W, 1.0, 1.3, gamma)

        a = np.exp(-((X - V[0]) ** 2) / 2.0).ravel()
        b = np.exp(-((Y - W[0]) ** 2) / (2 * 1.3**2)).ravel()
        r = (a - a.mean()) * (b - b.mean())
        expected = 60 * r.mean() ** 2 / (np.var(r) + gamma)
        assert got == pytest.approx(float(expected), rel=1e-10)

    def test_invariant_to_feature_relabeling(self):
        rng = np.random.default_rng(20)
        X = rng.standard_normal((50, 2))
        Y = rng.standard_normal((50, 1))
        V = rng.standard_normal((5, 2))
        W = rng.standard_normal((5, 1))
        base = nfsic_statistic(X, Y, V, W, 1.0, 1.0, 1e-5)
        perm = np.array([3, 0, 4, 1, 2])
        assert nfsic_statistic(X, Y, V[perm], W[perm], 1.0, 1.0, 1e-5) == pytest.approx(
            base, rel=1e-9
        )


class TestOptimizeFeatures:
    def test_budget_one_returns_single_candidate(self):
        rng = np.random.default_rng(21)
        X = rng.standard_normal((50, 1))
        Y = rng.standard_normal((50, 1))
        cfg = NfsicConfig(n_features=3, search_budget=1)
        (V, W, sx, sy), trace = optimize_features(X, Y, cfg, seed=0, return_trace=True)
        assert trace.size == 1
        assert nfsic_statistic(X, Y, V, W, sx, sy, cfg.ridge) == pytest.approx(
            float(trace[0]), rel=1e-12
        )

    def test_argmax_contract(self):
        rng = np.random.default_rng(22)
        X = rng.standard_normal((80, 2))
        Y = rng.standard_normal((80, 1))
        cfg = NfsicConfig(n_features=4, search_budget=30)
        (V, W, sx, sy), trace = optimize_features(X, Y, cfg, seed=1, return_trace=True)
        best = nfsic_statistic(X, Y, V, W, sx, sy, cfg.ridge)
        assert best == pytest.approx(float(trace.max()), rel=1e-12)
        assert np.all(best >= trace - 1e-9)

    def test_gain_over_median_candidate_on_gsign(self):
        cfg = NfsicConfig(n_features=10, search_budget=60)
        wins = 0
        n_seeds = 20
        for seed in range(n_seeds):
            ds = sample_gaussian_sign(GaussianSignConfig(d=2, n=1000), seed=300 + seed)
            _, trace = optimize_features(ds.X, ds.Y, cfg, seed=seed, return_trace=True)
            wins += float(trace.max()) > float(np.median(trace))
        assert wins >= n_seeds - 1

    def test_degenerate_training_data(self):
        X = np.ones((20, 1))
        Y = np.ones((20, 1))
        cfg = NfsicConfig(n_features=2, search_budget=5)
        V, W, sx, sy = optimize_features(X, Y, cfg, seed=0)
        assert sx == 1.0 and sy == 1.0
        assert np.array_equal(V, X[:2])
        assert np.array_equal(W, Y[:2])


class TestNfsicTest:
    def test_rejects_linear_dependence(self):
        for seed in range(10):
            rng = np.random.default_rng(400 + seed)
            x = rng.standard_normal(400)
            r = nfsic_test(x[:, None], x[:, None], alpha=0.05, seed=seed)
            assert r.reject, f"seed {seed}"
            assert r.n_used == 200

    def test_level_calibration(self):
        cfg = NfsicConfig(search_budget=50)  # smaller budget keeps this quick
        reps = 500
        rejections = 0
        for r in range(reps):
            rng = np.random.default_rng(70_000 + r)
            X = rng.standard_normal((400, 1))
            Y = rng.standard_normal((400, 1))
            res = nfsic_test(X, Y, alpha=0.05, config=cfg, seed=80_000 + r)
            rejections += res.reject
        rate = rejections / reps
        assert 0.02 <= rate <= 0.08, f"empirical level {rate}"

    def test_boundary_sample_size(self):
        cfg = NfsicConfig(n_features=2, search_budget=5)
        rng = np.random.default_rng(23)
        X = rng.standard_normal((16, 1))
        Y = rng.standard_normal((16, 1))
        r = nfsic_test(X, Y, config=cfg, seed=0)
        assert r.n_used == 8
        assert r.details["n_train"] == 8

    def test_too_small_sample(self):
        cfg = NfsicConfig(n_features=10)
        with pytest.raises(ValueError):
            nfsic_test(np.zeros((79, 1)), np.zeros((79, 1)), config=cfg)

    def test_deterministic(self):
        rng = np.random.default_rng(24)
        X = rng.standard_normal((100, 1))
        Y = rng.standard_normal((100, 1))
        cfg = NfsicConfig(n_features=3, search_budget=10, permutations=50)
        a = nfsic_test(X, Y, config=cfg, seed=11)
        b = nfsic_test(X, Y, config=cfg, seed=11)
        assert a.p_value == b.p_value and a.statistic == b.statistic
