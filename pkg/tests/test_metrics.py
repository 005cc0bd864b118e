import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from quantgp.curves import EmpiricalQuantilePoints, QuantileFit, build_basis, eval_quantile, fit_quantile
from quantgp.metrics import CDFCurve, el1, summary_stats


def random_fit(rng, basis, scale=1.0):
    beta = np.r_[rng.normal(), rng.exponential(scale / basis.num_coefficients,
                                               size=basis.num_coefficients - 1)]
    return QuantileFit(beta)


def step(at):
    return CDFCurve.from_callable(lambda y: (y >= at).astype(float), at, at, (at,))


class TestEL1:
    def test_identical(self, rng):
        basis = build_basis(3, 10)
        F = CDFCurve.from_quantile(random_fit(rng, basis), basis)
        assert el1(F, F) == 0.0

    def test_unit_steps(self):
        assert el1(step(0.0), step(1.0)) == pytest.approx(1.0, abs=1e-12)

    def test_step_samples(self):
        F = CDFCurve.from_sample([0.0, 0.0, 1.0, 1.0])
        G = CDFCurve.from_sample([0.0, 1.0, 1.0, 1.0])
        assert el1(F, G) == pytest.approx(0.25, abs=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            el1(None, step(0.0))
        with pytest.raises(ValueError):
            CDFCurve.from_sample([])

    @pytest.mark.parametrize("seed", range(5))
    def test_quadrature_oracle(self, seed):
        rng = np.random.default_rng(seed)
        basis = build_basis(3, 8)
        a, b = random_fit(rng, basis), random_fit(rng, basis)
        Fa, Fb = CDFCurve.from_quantile(a, basis), CDFCurve.from_quantile(b, basis)
        lo, hi = min(Fa.lower, Fb.lower), max(Fa.upper, Fb.upper)
        pts = sorted(set(Fa.breaks + Fb.breaks))
        oracle, _ = integrate.quad(lambda y: abs(Fa(y) - Fb(y)), lo, hi, points=pts[1:-1],
                                   limit=500, epsabs=1e-10)
        assert el1(Fa, Fb) == pytest.approx(oracle, abs=1e-4)

    @given(st.integers(0, 2 ** 32 - 1))
    def test_metric_properties(self, seed):
        rng = np.random.default_rng(seed)
        basis = build_basis(3, 6)
        a, b, c = [CDFCurve.from_quantile(random_fit(rng, basis), basis) for _ in range(3)]
        assert el1(a, b) == pytest.approx(el1(b, a), abs=1e-12)
        assert el1(a, a) == 0.0
        assert el1(a, b) > 0.0
        lo = min(x.lower for x in (a, b, c)) - 0.1
        hi = max(x.upper for x in (a, b, c)) + 0.1
        grid = np.unique(np.r_[np.linspace(lo, hi, 1000), a.breaks, b.breaks, c.breaks])
        assert el1(a, c, grid=grid) <= el1(a, b, grid=grid) + el1(b, c, grid=grid) + 1e-6

    def test_separate_grids_agree(self, rng):
        basis = build_basis(3, 6)
        a, b = [CDFCurve.from_quantile(random_fit(rng, basis), basis) for _ in range(2)]
        grid = np.linspace(min(a.lower, b.lower) - 1, max(a.upper, b.upper) + 1, 200001)
        assert el1(a, b) == pytest.approx(el1(a, b, grid=grid), abs=1e-4)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            el1(step(0.0), step(1.0), grid=[1.0, 0.0])


class TestSummaryStats:
    def test_uniform(self):
        basis = build_basis(3, 10)
        p = np.linspace(0.001, 1, 1000)
        fit = fit_quantile(EmpiricalQuantilePoints(p, p), basis)
        st_ = summary_stats(fit, basis)
        assert st_.mean == pytest.approx(0.5, abs=1e-4)
        assert st_.sd == pytest.approx(0.28868, abs=1e-4)

    def test_constant(self):
        basis = build_basis(3, 10)
        fit = QuantileFit(np.r_[2.5, np.zeros(basis.num_coefficients - 1)])
        st_ = summary_stats(fit, basis)
        assert st_.mean == pytest.approx(2.5)
        assert st_.sd == 0.0
        np.testing.assert_allclose(st_.quantiles, 2.5)

    @pytest.mark.parametrize("seed", range(3))
    def test_monte_carlo_oracle(self, seed):
        rng = np.random.default_rng(seed)
        basis = build_basis(3, 12)
        fit = random_fit(rng, basis, scale=3.0)
        st_ = summary_stats(fit, basis)
        draws = eval_quantile(fit, basis, rng.uniform(size=10 ** 7))
        se_mean = draws.std() / np.sqrt(draws.size)
        assert abs(st_.mean - draws.mean()) <= 3 * se_mean
        var_se = np.sqrt(np.mean((draws - draws.mean()) ** 4) - draws.var() ** 2) / np.sqrt(draws.size)
        assert abs(st_.sd ** 2 - draws.var()) <= 3 * var_se

    @given(st.integers(0, 2 ** 32 - 1))
    def test_quantiles_nondecreasing(self, seed):
        rng = np.random.default_rng(seed)
        basis = build_basis(3, 8)
        probs = np.sort(rng.uniform(size=15))
        st_ = summary_stats(random_fit(rng, basis), basis, probs)
        assert np.all(np.diff(st_.quantiles) >= 0)
        assert st_.sd >= 0

    def test_as_dict(self):
        basis = build_basis(3, 4)
        st_ = summary_stats(QuantileFit(np.r_[0.0, np.ones(basis.num_coefficients - 1)]), basis,
                            (0.5,))
        assert set(st_.as_dict()) == {"mean", "sd", "q0.5"}
