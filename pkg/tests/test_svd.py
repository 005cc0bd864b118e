import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quantgp.curves import build_basis, ecdf, fit_quantile
from quantgp.svd import (DEFAULT_NUM_COMPONENTS, DEFAULT_THRESHOLD, decompose,
                         reconstruct_beta, select_components)


def relative_error(f, B):
    return np.linalg.norm(f.U @ np.diag(f.Lambda[:f.U.shape[1]]) @ f.V[:, :f.U.shape[1]].T - B) \
        / np.linalg.norm(B)


class TestDecompose:
    def test_identity(self):
        f = decompose(np.eye(3))
        np.testing.assert_allclose(f.Lambda, 1.0)
        np.testing.assert_allclose(f.W.T @ f.W, np.eye(3), atol=1e-14)

    def test_rank_one(self, rng):
        u, v = rng.normal(size=7), rng.normal(size=5)
        f = decompose(np.outer(u, v))
        assert f.Lambda[0] == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v))
        np.testing.assert_allclose(f.Lambda[1:], 0.0, atol=1e-12)

    @pytest.mark.parametrize("shape", [(10, 6), (50, 21), (4, 9), (1, 3)])
    def test_reconstruction_and_scores(self, rng, shape):
        B = rng.normal(size=shape)
        f = decompose(B)
        assert relative_error(f, B) <= 1e-10
        k = min(shape)
        np.testing.assert_allclose(f.W, B @ f.V, atol=1e-12)
        np.testing.assert_allclose(f.W[:, :k], f.U * f.Lambda[:k], atol=1e-10)
        assert np.all(np.diff(f.Lambda) <= 0) and np.all(f.Lambda >= 0)
        np.testing.assert_allclose(f.V.T @ f.V, np.eye(shape[1]), atol=1e-12)
        assert f.U.shape == (shape[0], k)

    def test_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            decompose(np.array([[1.0, np.inf]]))

    def test_error_nonincreasing_in_dprime(self, rng):
        B = rng.normal(size=(30, 12))
        f = decompose(B)
        errs = [np.linalg.norm(B - f.W[:, :k] @ f.V[:, :k].T) for k in range(1, 13)]
        assert np.all(np.diff(errs) <= 1e-12) and errs[-1] < 1e-10


class TestSelect:
    def test_hand_computed(self):
        lam = [4, 3, 2, 1]
        assert select_components(lam, 0.7) == 2
        assert select_components(lam, 1.0) == 4
        assert select_components(lam, 0.4) == 1
        assert select_components(lam, 0.41) == 2
        assert select_components(lam, 0.9) == 3
        assert select_components(lam, 0.91) == 4

    def test_defaults(self):
        assert DEFAULT_NUM_COMPONENTS == 12
        assert DEFAULT_THRESHOLD == 0.8

    def test_errors(self):
        with pytest.raises(ValueError):
            select_components([0, 0, 0])
        with pytest.raises(ValueError):
            select_components([1, 2], 0.0)
        with pytest.raises(ValueError):
            select_components([1, -1], 0.5)

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=30).filter(lambda v: sum(v) > 0),
           st.floats(0.01, 1.0))
    def test_smallest_reaching_threshold(self, lam, thr):
        lam = sorted(lam, reverse=True)
        k = select_components(lam, thr)
        assert 1 <= k <= len(lam)
        frac = np.cumsum(lam) / np.sum(lam)
        assert frac[k - 1] >= thr - 1e-9
        if k > 1:
            assert frac[k - 2] < thr


class TestReconstruct:
    def test_truncates_spline_part_only(self):
        assert reconstruct_beta([1, -2, 3], np.eye(3)).beta.tolist() == [1, 0, 3]
        assert reconstruct_beta([-5, 1, 1], np.eye(3)).beta.tolist() == [-5, 1, 1]

    def test_full_truncation_flag(self):
        out = reconstruct_beta([-5, 1, 1], np.eye(3), truncate_intercept=True)
        assert out.beta.tolist() == [0, 1, 1]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            reconstruct_beta([1, 2], np.eye(3), 3)
        with pytest.raises(ValueError):
            reconstruct_beta([1, 2, 3, 4], np.eye(3))
        with pytest.raises(ValueError):
            reconstruct_beta([1], np.ones((3, 2)))

    def test_round_trip_on_fitted_rows(self, rng):
        basis = build_basis(3, 17)
        B = np.vstack([fit_quantile(ecdf(rng.gamma(2, size=40) + k), basis).beta
                       for k in range(50)])
        f = decompose(B)
        d = B.shape[1]
        for i in range(B.shape[0]):
            np.testing.assert_allclose(reconstruct_beta(f.W[i], f.V, d).beta, B[i], atol=1e-8)

    def test_truncation_idempotent(self, rng):
        V = np.linalg.qr(rng.normal(size=(6, 6)))[0]
        w = rng.normal(size=6)
        once = reconstruct_beta(w, V).beta
        twice = reconstruct_beta(once @ V, V).beta
        np.testing.assert_allclose(once, twice, atol=1e-12)
