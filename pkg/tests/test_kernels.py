import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quantgp.kernels import (CategoryCorrelationParams, NumericKernelParams, build_omega_alpha,
                             build_omega_eps, category_blocks, default_r_max, gauss_corr,
                             gauss_kernel, hypersphere_P, hypersphere_P_grad, indicator_matrix,
                             min_wendland_exponent, n_angles, omega_alpha_kron, wendland)


def random_instance(rng, n=10, p=2, c=3):
    codes = np.sort(np.concatenate([np.arange(c), rng.integers(0, c, size=n - c)]))
    X = rng.uniform(size=(n, p))
    thetas = rng.uniform(0.05, np.pi - 0.05, size=n_angles(c))
    return X, codes, thetas


def brute_force_alpha(X, codes, P, r_max, v):
    n = len(codes)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            r = np.sqrt(np.sum((X[i] - X[j]) ** 2))
            out[i, j] = P[codes[i], codes[j]] * (max(1 - r / r_max, 0.0) ** v if r <= r_max else 0)
    return out


class TestGauss:
    def test_examples(self):
        prm = NumericKernelParams([1.0, 1.0], 0.1)
        assert gauss_corr([0, 0], [0, 0], prm, same_index=True) == pytest.approx(1.1)
        assert gauss_corr([0, 0], [1, 1], NumericKernelParams([1, 1]), False) == pytest.approx(
            np.exp(-2))
        assert gauss_corr([0, 0], [1e3, 0], prm, False) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            gauss_corr([0, 0], [0, 0, 0], NumericKernelParams([1, 1]))
        with pytest.raises(ValueError, match="dimension"):
            gauss_corr([0, 0, 0], [0, 0, 0], NumericKernelParams([1, 1]))

    def test_bad_params(self):
        with pytest.raises(ValueError):
            NumericKernelParams([1.0, 0.0])
        with pytest.raises(ValueError):
            NumericKernelParams([1.0], -0.1)


class TestOmegaEps:
    def test_cross_category_zero(self):
        M = build_omega_eps([[0.0], [0.1]], [0, 1], NumericKernelParams([1.0], 0.0))
        assert M[0, 1] == 0 and M[1, 0] == 0

    def test_coincident_points(self):
        M = build_omega_eps([[0.3], [0.3]], [0, 0], NumericKernelParams([1.0], 0.0))
        np.testing.assert_array_equal(M, np.ones((2, 2)))

    def test_unsorted(self):
        with pytest.raises(ValueError, match="data must be category-sorted"):
            build_omega_eps([[0.0], [1.0]], [1, 0], NumericKernelParams([1.0]))

    def test_matches_pointwise(self, rng):
        X, codes, _ = random_instance(rng, 8, 2, 2)
        prm = NumericKernelParams([0.3, 0.7], 0.05)
        M = build_omega_eps(X, codes, prm)
        for i in range(8):
            for j in range(8):
                ref = gauss_corr(X[i], X[j], prm, i == j) if codes[i] == codes[j] else 0.0
                assert M[i, j] == pytest.approx(ref, abs=1e-15)
        assert np.linalg.eigvalsh(M).min() > 0
        np.testing.assert_allclose(np.diag(M), 1.05)

    def test_per_category_params(self, rng):
        X, codes, _ = random_instance(rng, 9, 1, 2)
        prms = [NumericKernelParams([0.2], 0.0), NumericKernelParams([2.0], 0.5)]
        M = build_omega_eps(X, codes, prms)
        sl = category_blocks(codes)[1]
        np.testing.assert_allclose(M[sl, sl], gauss_kernel(X[sl], X[sl], [2.0]) + 0.5 * np.eye(
            sl.stop - sl.start))


class TestWendland:
    def test_examples(self):
        assert wendland(0.0, 2.0, 3) == 1.0
        assert wendland(2.0, 2.0, 3) == 0.0
        assert wendland(5.0, 2.0, 3) == 0.0
        assert wendland(1.0, 2.0, 2) == pytest.approx(0.25)

    def test_errors(self):
        with pytest.raises(ValueError):
            wendland(0.5, 0.0, 2)
        with pytest.raises(ValueError):
            wendland(-0.5, 1.0, 2)

    def test_infinite_range(self):
        np.testing.assert_array_equal(wendland(np.array([0.0, 10.0]), np.inf, 2), 1.0)

    @given(st.lists(st.floats(0, 10), min_size=2, max_size=20), st.floats(0.1, 5), st.floats(1, 4))
    def test_nonincreasing(self, r, r_max, v):
        r = np.sort(r)
        k = wendland(r, r_max, v)
        assert np.all(np.diff(k) <= 1e-15) and np.all((k >= 0) & (k <= 1))

    def test_exponent_bound(self):
        assert [min_wendland_exponent(p) for p in (1, 2, 3, 4, 5)] == [1, 2, 2, 3, 3]

    def test_default_range_is_median_distance(self):
        X = np.array([[0.0], [1.0], [3.0]])
        assert default_r_max(X) == 2.0


class TestHypersphere:
    def test_examples(self):
        np.testing.assert_allclose(hypersphere_P([np.pi / 2], 2)[0], np.eye(2), atol=1e-15)
        assert hypersphere_P([np.pi / 3], 2)[0][0, 1] == pytest.approx(0.5)

    def test_entries_follow_definition(self):
        th = np.array([0.4, 1.1, 2.0])  # theta_21, theta_31, theta_32
        _, L = hypersphere_P(th, 3)
        expect = np.array([
            [1, 0, 0],
            [np.cos(0.4), np.sin(0.4), 0],
            [np.cos(1.1), np.sin(1.1) * np.cos(2.0), np.sin(1.1) * np.sin(2.0)],
        ])
        np.testing.assert_allclose(L, expect, atol=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError):
            hypersphere_P([0.0], 2)
        with pytest.raises(ValueError):
            hypersphere_P([np.pi], 2)
        with pytest.raises(ValueError):
            hypersphere_P([1.0, 1.0], 2)

    @given(st.integers(2, 6), st.integers(0, 2 ** 31))
    def test_unit_diagonal_pd(self, c, seed):
        th = np.random.default_rng(seed).uniform(0.01, np.pi - 0.01, size=n_angles(c))
        P, L = hypersphere_P(th, c)
        np.testing.assert_allclose(np.diag(P), 1.0, atol=1e-12)
        np.testing.assert_allclose(P, P.T, atol=1e-15)
        assert np.linalg.eigvalsh(P).min() > 0
        assert np.allclose(L, np.tril(L)) and np.all(np.diag(L) > 0)

    def test_gradient_matches_finite_differences(self, rng):
        for c in (2, 3, 4):
            th = rng.uniform(0.3, 2.8, size=n_angles(c))
            G = hypersphere_P_grad(th, c)
            h = 1e-6
            for a in range(th.size):
                e = np.zeros_like(th)
                e[a] = h
                fd = (hypersphere_P(th + e, c)[0] - hypersphere_P(th - e, c)[0]) / (2 * h)
                np.testing.assert_allclose(G[a], fd, atol=1e-8)


class TestOmegaAlpha:
    def test_coincident_same_category(self):
        prm = CategoryCorrelationParams([1.0], 1.0, 1)
        M = build_omega_alpha([[0.2], [0.2], [0.9]], [0, 0, 1], prm)
        assert M[0, 1] == 1.0

    def test_compact_support(self):
        prm = CategoryCorrelationParams([0.3], 0.5, 1)
        M = build_omega_alpha([[0.0], [0.6]], [0, 1], prm)
        assert M[0, 1] == 0.0

    def test_exponent_enforced(self):
        prm = CategoryCorrelationParams([1.0], 1.0, 1)
        with pytest.raises(ValueError, match="positive-definiteness"):
            build_omega_alpha(np.zeros((2, 3)), [0, 1], prm)

    def test_brute_force_and_kron(self, rng):
        X, codes, th = random_instance(rng, 10, 2, 3)
        prm = CategoryCorrelationParams(th, 0.6, 2)
        M = build_omega_alpha(X, codes, prm)
        P = hypersphere_P(th, 3)[0]
        np.testing.assert_allclose(M, brute_force_alpha(X, codes, P, 0.6, 2), atol=1e-14)
        np.testing.assert_allclose(M, omega_alpha_kron(X, codes, prm), atol=1e-12)
        assert np.linalg.eigvalsh(M).min() >= -1e-10

    def test_indicator_shape(self):
        A = indicator_matrix(np.array([0, 0, 1]), 2)
        assert A.shape == (6, 3)
        assert A[0, 0] == A[1, 1] == A[5, 2] == 1 and A.sum() == 3

    def test_large_range_tends_to_category_correlation(self, rng):
        X, codes, th = random_instance(rng, 8, 2, 3)
        P = hypersphere_P(th, 3)[0]
        target = P[np.ix_(codes, codes)]
        errs = [np.abs(build_omega_alpha(X, codes, CategoryCorrelationParams(th, r, 2))
                       - target).max() for r in (10.0, 1e3, 1e6)]
        assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-5
        np.testing.assert_allclose(
            build_omega_alpha(X, codes, CategoryCorrelationParams(th, np.inf, 2)), target)
