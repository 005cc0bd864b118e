"""
Synthetic replicated-measurement data with a known outcome distribution.

Each configuration ``(x, k)`` carries a finite Gaussian mixture. Component
means are a common offset plus a smooth random field shared by all
categories plus a category shift field; the shift fields of different
categories are correlated through a compound-symmetric correlation matrix.
Mixture weights are a softmax of linear functions of ``x``.

Smooth fields are random Fourier features, so the truth is a fixed,
cheap-to-evaluate function once the seed is chosen.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr, softmax

from .data import Dataset
from .metrics import CDFCurve

__all__ = ["SimulationSpec", "MixtureOracle", "simulate", "load_spec"]


def _default_levels():
    return (tuple(np.linspace(0.0, 1.0, 7).tolist()), tuple(np.linspace(0.0, 1.0, 8).tolist()))


@dataclass(frozen=True)
class SimulationSpec:
    """Generator settings.

    Attributes
    ----------
    levels : tuple of tuple of float
        Grid levels per numeric input; configurations are their product.
    n_categories : int
    replicates : int
        Draws per configuration.
    offsets : tuple of float
        Constant part of each mixture component mean.
    component_sd : tuple of float
        Standard deviation of each component (zero gives point masses).
    weight_logits : tuple of tuple of float
        Per component ``(intercept, slope_1, ..., slope_p)``.
    field_amplitude, field_frequency : float
        Scale and typical frequency of the shared mean field.
    shift_scale, shift_frequency : float
        Scale and typical frequency of the category shift fields.
    shift_correlation : float
        Correlation between the shift fields of two categories.
    n_features : int
        Random Fourier features per field.
    """

    levels: tuple = field(default_factory=_default_levels)
    n_categories: int = 3
    replicates: int = 200
    offsets: tuple = (0.0, 1.5)
    component_sd: tuple = (0.25, 0.3)
    weight_logits: tuple = ((0.0, 0.0, 0.0), (0.0, 3.0, -3.0))
    field_amplitude: float = 1.0
    field_frequency: float = 3.0
    shift_scale: float = 0.6
    shift_frequency: float = 3.0
    shift_correlation: float = 0.8
    n_features: int = 25

    def __post_init__(self):
        levels = tuple(tuple(float(v) for v in lv) for lv in self.levels)
        if not levels or any(len(lv) == 0 for lv in levels):
            raise ValueError("every numeric input needs at least one level")
        object.__setattr__(self, "levels", levels)
        J = len(self.offsets)
        object.__setattr__(self, "offsets", tuple(float(v) for v in self.offsets))
        object.__setattr__(self, "component_sd", tuple(float(v) for v in self.component_sd))
        object.__setattr__(self, "weight_logits",
                           tuple(tuple(float(v) for v in row) for row in self.weight_logits))
        if J == 0:
            raise ValueError("need at least one mixture component")
        if len(self.component_sd) != J or len(self.weight_logits) != J:
            raise ValueError("offsets, component_sd and weight_logits must have equal length")
        if any(len(row) != len(levels) + 1 for row in self.weight_logits):
            raise ValueError("each weight_logits row needs an intercept plus one slope per input")
        if any(s < 0 for s in self.component_sd):
            raise ValueError("component standard deviations must be nonnegative")
        if int(self.n_categories) != self.n_categories or self.n_categories < 1:
            raise ValueError("n_categories must be a positive integer")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise ValueError("replicates must be a positive integer")
        if self.n_categories > 1 and not -1.0 / (self.n_categories - 1) < self.shift_correlation < 1:
            raise ValueError("shift_correlation gives a non positive definite correlation matrix")
        if self.n_features < 1:
            raise ValueError("n_features must be positive")

    @property
    def p(self):
        return len(self.levels)

    def grid(self):
        mesh = np.meshgrid(*[np.array(lv) for lv in self.levels], indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def to_dict(self):
        return asdict(self)


def load_spec(path):
    """Read a JSON file of :class:`SimulationSpec` fields (missing ones take defaults)."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("simulation spec must be a JSON object")
    unknown = set(raw) - set(SimulationSpec.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown simulation spec fields: {sorted(unknown)}")
    return SimulationSpec(**raw)


class _FourierField:
    """``f(x) = amp * sqrt(2 / F) * sum_i a_i cos(omega_i . x + b_i)``."""

    def __init__(self, rng, p, n_features, frequency, amplitude):
        self.omega = rng.normal(0.0, frequency, size=(n_features, p))
        self.phase = rng.uniform(0.0, 2 * np.pi, size=n_features)
        self.coef = rng.normal(size=n_features) * np.sqrt(2.0 / n_features)
        self.amplitude = amplitude

    def __call__(self, X):
        return self.amplitude * (np.cos(X @ self.omega.T + self.phase) @ self.coef)


class MixtureOracle:
    """True mixture parameters per configuration with exact CDF and quantiles.

    Rows follow the order of the simulated :class:`Dataset`.
    """

    def __init__(self, means, sds, weights):
        self.means = np.asarray(means, dtype=float)
        self.sds = np.asarray(sds, dtype=float)
        self.weights = np.asarray(weights, dtype=float)

    def __len__(self):
        return self.means.shape[0]

    def cdf(self, i, y):
        y = np.asarray(y, dtype=float)
        mu, w = self.means[i], self.weights[i]
        out = np.zeros(y.shape)
        for j in range(mu.size):
            if self.sds[j] > 0:
                out = out + w[j] * ndtr((y - mu[j]) / self.sds[j])
            else:
                out = out + w[j] * (y >= mu[j])
        return np.clip(out, 0.0, 1.0)

    def bounds(self, i, width=8.0):
        mu = self.means[i]
        return float((mu - width * self.sds).min()), float((mu + width * self.sds).max())

    def quantile(self, i, p, iterations=100):
        """``inf{y : F(y) >= p}`` by vectorized bisection."""
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        flat = p.ravel()
        a, b = self.bounds(i)
        lo = np.full(flat.shape, a - 1.0)
        hi = np.full(flat.shape, b + 1.0)
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            above = self.cdf(i, mid) >= flat
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        return hi.reshape(p.shape)

    def curve(self, i):
        """True CDF as a :class:`~quantgp.metrics.CDFCurve`."""
        a, b = self.bounds(i)
        breaks = tuple(self.means[i][self.sds == 0].tolist())
        return CDFCurve.from_callable(lambda y: self.cdf(i, y), a, b, breaks)

    def subset(self, indices):
        idx = sorted(int(i) for i in indices)
        return MixtureOracle(self.means[idx], self.sds, self.weights[idx])


def simulate(spec=None, seed=0):
    """Draw a replicated dataset and its ground truth.

    Returns
    -------
    dataset : Dataset
        Category-sorted rows, categorical column ``"mode"`` with labels
        ``cat0, cat1, ...``.
    oracle : MixtureOracle
        True distribution of every dataset row.
    """
    spec = spec or SimulationSpec()
    rng = np.random.default_rng(seed)
    c, p = int(spec.n_categories), spec.p
    shared = _FourierField(rng, p, spec.n_features, spec.field_frequency, spec.field_amplitude)
    raw_shifts = [_FourierField(rng, p, spec.n_features, spec.shift_frequency, spec.shift_scale)
                  for _ in range(c)]
    R = np.full((c, c), spec.shift_correlation)
    np.fill_diagonal(R, 1.0)
    L = np.linalg.cholesky(R)

    grid = spec.grid()
    base = shared(grid)
    G = np.column_stack([f(grid) for f in raw_shifts])
    shifts = G @ L.T
    logits = np.array(spec.weight_logits)
    W = softmax(logits[:, 0][None, :] + grid @ logits[:, 1:].T, axis=1)
    offsets = np.array(spec.offsets)
    sds = np.array(spec.component_sd)

    X_rows, Z_rows, samples, means, weights = [], [], [], [], []
    m = int(spec.replicates)
    for k in range(c):
        for i, x in enumerate(grid):
            mu = offsets + base[i] + shifts[i, k]
            comp = rng.choice(mu.size, size=m, p=W[i])
            y = mu[comp] + sds[comp] * rng.standard_normal(m)
            X_rows.append(x)
            Z_rows.append((f"cat{k}",))
            samples.append(y)
            means.append(mu)
            weights.append(W[i])
    ds = Dataset(X=np.array(X_rows), Z=Z_rows, samples=samples,
                 numeric_names=tuple(f"x{j}" for j in range(p)),
                 categorical_names=("mode",), outcome_name="y")
    # Dataset sorts its rows; apply the same order to the truth
    order = sorted(range(len(Z_rows)), key=lambda i: (Z_rows[i], tuple(X_rows[i])))
    oracle = MixtureOracle(np.array(means)[order], sds, np.array(weights)[order])
    return ds, oracle
