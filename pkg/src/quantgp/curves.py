"""
Monotone quantile-function representation.

Replicated outcome measurements at one configuration are turned into
sample quantile points, smoothed with a nonnegative combination of
I-splines on the fixed domain [0, 1], and turned back into CDF values by
monotone inversion.

I-splines are integrated M-splines (Ramsay, 1988). An M-spline of order
``k`` is a normalized B-spline of degree ``k - 1``; its integral from 0 is
nondecreasing, starts at 0 and reaches 1 at the right end of its support.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline
from scipy.optimize import nnls

__all__ = [
    "ReplicateSample",
    "EmpiricalQuantilePoints",
    "ISplineBasis",
    "QuantileFit",
    "ecdf",
    "build_basis",
    "fit_quantile",
    "eval_quantile",
    "quantile_to_cdf",
    "quantile_to_cdf_values",
]


@dataclass(frozen=True)
class ReplicateSample:
    """Repeated outcome measurements at one configuration."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("empty replicate set")
        if not np.all(np.isfinite(values)):
            raise ValueError("replicate values must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class EmpiricalQuantilePoints:
    """Sorted sample with its rank probabilities ``p = b / m``."""

    p: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.p.size

    def as_pairs(self):
        return list(zip(self.p.tolist(), self.y.tolist()))


def ecdf(sample):
    """Critical points of the empirical CDF of ``sample``.

    Parameters
    ----------
    sample : ReplicateSample or array-like
        The ``m`` replicate measurements.

    Returns
    -------
    EmpiricalQuantilePoints
        ``p = (1/m, 2/m, ..., 1)`` and the ascending order statistics.
    """
    if not isinstance(sample, ReplicateSample):
        values = np.asarray(sample, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("empty replicate set")
        sample = ReplicateSample(values)
    y = np.sort(sample.values)
    m = y.size
    p = np.arange(1, m + 1) / m
    return EmpiricalQuantilePoints(p=p, y=y)


@dataclass(frozen=True)
class ISplineBasis:
    """I-spline basis on [0, 1] with equally spaced interior knots.

    Parameters
    ----------
    order : int
        Order of the underlying M-splines (degree ``order - 1``).
    interior_knots : ndarray
        Strictly increasing knots inside (0, 1).
    """

    order: int
    interior_knots: np.ndarray
    _ispl: BSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"spline order must be a positive integer, got {self.order}")
        knots = np.asarray(self.interior_knots, dtype=float).ravel()
        if knots.size and (knots.min() <= 0 or knots.max() >= 1 or np.any(np.diff(knots) <= 0)):
            raise ValueError("interior knots must be strictly increasing inside (0, 1)")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "interior_knots", knots)

        k = self.order
        t = np.concatenate([np.zeros(k), knots, np.ones(k)])
        nb = knots.size + k
        # M_j = k / (t_{j+k} - t_j) * B_j ; every span is positive here
        scale = k / (t[k:k + nb] - t[:nb])
        mspl = BSpline(t, np.diag(scale), k - 1, extrapolate=False)
        object.__setattr__(self, "_ispl", mspl.antiderivative())

    @property
    def num_basis(self):
        """Number of I-spline functions, ``d - 1``."""
        return self.interior_knots.size + self.order

    @property
    def num_coefficients(self):
        """Length ``d`` of a coefficient vector (intercept included)."""
        return self.num_basis + 1

    def __call__(self, p):
        """Basis matrix of shape ``(len(p), num_basis)``; constant outside [0, 1]."""
        p = np.clip(np.atleast_1d(np.asarray(p, dtype=float)), 0.0, 1.0)
        vals = self._ispl(p)
        # antiderivative is exact up to roundoff; pin the boundary values
        vals = np.clip(np.nan_to_num(vals), 0.0, 1.0)
        vals[p == 0.0] = 0.0
        vals[p == 1.0] = 1.0
        return vals

    def combination(self, coef):
        """Single spline ``sum_j coef_j gamma_j`` (cheaper than the full basis matrix)."""
        spl = self._ispl
        return BSpline(spl.t, spl.c @ np.asarray(coef, dtype=float), spl.k, extrapolate=False)

    def design(self, p):
        """Design matrix ``[1, gamma_1(p), ..., gamma_{d-1}(p)]``."""
        g = self(p)
        return np.column_stack([np.ones(g.shape[0]), g])


def build_basis(order=3, num_interior_knots=20):
    """Construct an I-spline basis with equally spaced interior knots.

    ``order=3`` gives quadratic M-splines, so the I-splines are piecewise
    cubic and continuously differentiable.
    """
    if int(order) != order or order < 1:
        raise ValueError(f"spline order must be a positive integer, got {order}")
    if num_interior_knots < 0:
        raise ValueError("num_interior_knots must be nonnegative")
    knots = np.arange(1, num_interior_knots + 1) / (num_interior_knots + 1)
    return ISplineBasis(order=int(order), interior_knots=knots)


@dataclass(frozen=True)
class QuantileFit:
    """Intercept followed by nonnegative I-spline coefficients."""

    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        if beta.size < 1:
            raise ValueError("coefficient vector must contain an intercept")
        object.__setattr__(self, "beta", beta)

    @property
    def intercept(self):
        return float(self.beta[0])

    @property
    def coefficients(self):
        return self.beta[1:]


def fit_quantile(points, basis):
    """Least-squares I-spline fit with nonnegative spline coefficients.

    The intercept is unconstrained. It is projected out by centering both
    the response and the basis columns, the centred problem is solved by
    active-set NNLS, and the intercept is recovered from the means.
    Basis functions that are constant over the observed probabilities
    duplicate the intercept and get coefficient zero.
    """
    if len(points) == 0:
        raise ValueError("empty replicate set")
    y = np.asarray(points.y, dtype=float)
    d = basis.num_coefficients
    if y.size < 2 or np.ptp(y) == 0.0:
        beta = np.zeros(d)
        beta[0] = y.mean()
        return QuantileFit(beta)

    G = basis(points.p)
    gbar = G.mean(axis=0)
    ybar = y.mean()
    Gc = G - gbar
    live = np.ptp(G, axis=0) > 1e-12
    coef = np.zeros(G.shape[1])
    if live.any():
        coef[live], _ = nnls(Gc[:, live], y - ybar, maxiter=50 * G.shape[1])
    beta = np.concatenate([[ybar - gbar @ coef], coef])
    return QuantileFit(beta)


def eval_quantile(fit, basis, p):
    """Evaluate ``Q(p) = beta_0 + sum_j beta_j gamma_j(p)``.

    Accepts a scalar or an array of probabilities; raises for values
    outside [0, 1].
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    if fit.beta.size != basis.num_coefficients:
        raise ValueError(
            f"fit has {fit.beta.size} coefficients, basis expects {basis.num_coefficients}")
    flat = arr.ravel()
    vals = fit.beta[0] + np.nan_to_num(basis.combination(fit.beta[1:])(flat))
    # pin the ends exactly, as the basis itself does
    vals[flat == 0.0] = fit.beta[0]
    vals[flat == 1.0] = fit.beta.sum()
    if flat.size > 1:
        # remove roundoff dips so the output is exactly monotone in p
        order = np.argsort(flat, kind="stable")
        vals[order] = np.maximum.accumulate(vals[order])
    if arr.ndim == 0:
        return float(vals[0])
    return vals.reshape(arr.shape)


def quantile_to_cdf_values(fit, basis, y, iterations=30, table_size=2049):
    """``F(y) = sup{p : Q(p) <= y}`` by vectorized bisection on p.

    A table of ``Q`` on an even p-grid brackets each root first, so the
    bisection only refines within one table cell.
    """
    y = np.asarray(y, dtype=float)
    flat = y.ravel()
    pt = np.linspace(0.0, 1.0, table_size)
    qt = np.maximum.accumulate(eval_quantile(fit, basis, pt))
    j = np.clip(np.searchsorted(qt, flat, side="right"), 1, table_size - 1)
    lo = pt[j - 1]
    hi = pt[j]
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        below = eval_quantile(fit, basis, mid) <= flat
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    F = lo
    F[flat < eval_quantile(fit, basis, 0.0)] = 0.0
    F[flat >= eval_quantile(fit, basis, 1.0)] = 1.0
    return F.reshape(y.shape)


def quantile_to_cdf(fit, basis, y_grid):
    """CDF of a fitted quantile function as a list of ``(y, F(y))`` pairs."""
    y_grid = np.asarray(y_grid, dtype=float).ravel()
    F = quantile_to_cdf_values(fit, basis, y_grid)
    return list(zip(y_grid.tolist(), F.tolist()))
