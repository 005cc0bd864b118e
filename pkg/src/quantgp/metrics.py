"""Distances between CDF curves and moments of quantile functions."""

from dataclasses import dataclass

import numpy as np

from .curves import eval_quantile, quantile_to_cdf_values

__all__ = ["CDFCurve", "el1", "SummaryStats", "summary_stats", "DEFAULT_PROBS"]

DEFAULT_PROBS = (0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95)


@dataclass(frozen=True)
class CDFCurve:
    """A CDF as a vectorized callable plus the interval where it rises.

    ``breaks`` lists points where the curve may jump; the EL1 grid adds
    them (and their left neighbours) so step functions integrate exactly.
    """

    func: object
    lower: float
    upper: float
    breaks: tuple = ()

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or self.upper < self.lower:
            raise ValueError("CDF support must be a finite interval")

    def __call__(self, y):
        return np.clip(np.asarray(self.func(np.asarray(y, dtype=float)), dtype=float), 0.0, 1.0)

    @classmethod
    def from_quantile(cls, fit, basis):
        p = np.concatenate([[0.0], basis.interior_knots, [1.0]])
        q = eval_quantile(fit, basis, p)
        return cls(lambda y: quantile_to_cdf_values(fit, basis, y),
                   float(q[0]), float(q[-1]), tuple(np.unique(q).tolist()))

    @classmethod
    def from_sample(cls, sample):
        """Empirical step CDF ``#{y_i <= y} / m``."""
        s = np.sort(np.asarray(sample, dtype=float).ravel())
        if s.size == 0:
            raise ValueError("empty sample")
        return cls(lambda y: np.searchsorted(s, y, side="right") / s.size,
                   float(s[0]), float(s[-1]), tuple(np.unique(s).tolist()))

    @classmethod
    def from_callable(cls, func, lower, upper, breaks=()):
        return cls(func, float(lower), float(upper), tuple(breaks))


def el1(F, F_hat, num=1000, extend=0.01, grid=None):
    """L1 distance ``int |F(y) - F_hat(y)| dy`` by the trapezoid rule.

    The grid covers the union of both supports widened by ``extend`` of
    its width at each end, with ``num`` equally spaced points merged with
    the jump locations of both curves. An explicit sorted ``grid`` may be
    passed instead; comparing several curves on one grid makes the result
    an exact seminorm of the evaluated values.
    """
    if F is None or F_hat is None:
        raise ValueError("empty curve")
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) < 0):
            raise ValueError("grid must be a sorted 1-D array of at least two points")
        return float(np.trapezoid(np.abs(F(grid) - F_hat(grid)), grid))
    if num < 2:
        raise ValueError("need at least two grid points")
    lo = min(F.lower, F_hat.lower)
    hi = max(F.upper, F_hat.upper)
    pad = extend * (hi - lo) if hi > lo else extend * max(1.0, abs(lo))
    grid = np.linspace(lo - pad, hi + pad, int(num))
    jumps = np.asarray(F.breaks + F_hat.breaks, dtype=float)
    if jumps.size:
        grid = np.concatenate([grid, jumps, np.nextafter(jumps, -np.inf)])
        grid = np.unique(grid)
    diff = np.abs(F(grid) - F_hat(grid))
    return float(np.trapezoid(diff, grid))


@dataclass(frozen=True)
class SummaryStats:
    """Mean, standard deviation and selected quantiles of a distribution."""

    mean: float
    sd: float
    probs: tuple
    quantiles: tuple

    def as_dict(self):
        out = {"mean": self.mean, "sd": self.sd}
        out.update({f"q{p:g}": q for p, q in zip(self.probs, self.quantiles)})
        return out


def summary_stats(fit, basis, probs=DEFAULT_PROBS, nodes=8):
    """Moments from the quantile function: ``mean = int Q``, ``var = int Q^2 - mean^2``.

    Integration is Gauss-Legendre on every knot span, which is exact for
    the piecewise-polynomial quantile functions of moderate order.
    """
    probs = tuple(float(p) for p in probs)
    edges = np.concatenate([[0.0], basis.interior_knots, [1.0]])
    x, w = np.polynomial.legendre.leggauss(max(nodes, basis.order + 1))
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    Q = eval_quantile(fit, basis, pts)
    mean = float(wts @ Q)
    var = float(wts @ (Q - mean) ** 2)
    qs = eval_quantile(fit, basis, np.array(probs)) if probs else np.zeros(0)
    return SummaryStats(mean=mean, sd=float(np.sqrt(max(var, 0.0))), probs=probs,
                        quantiles=tuple(float(q) for q in np.atleast_1d(qs)))
