"""
End-to-end distributional model: smoothed quantile curves, SVD scores,
one Gaussian-process model per retained score column, and the reverse
path from predicted scores to a monotone quantile function.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .curves import build_basis, ecdf, eval_quantile, fit_quantile, quantile_to_cdf_values
from .data import apply_transforms
from .lmgp import VARIANTS, ComponentData, EMConfig, LMGPParams, fit_em, predict_w, training_weights
from .svd import DEFAULT_NUM_COMPONENTS, decompose, reconstruct_beta, select_components

__all__ = [
    "FittedModel",
    "coefficient_matrix",
    "fit_model",
    "predict_distribution",
    "save_model",
    "load_model",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1
_FORMAT_NAME = "quantgp-model"


def coefficient_matrix(samples, basis):
    """Stack the smoothed quantile coefficients of every sample into ``B``."""
    return np.vstack([fit_quantile(ecdf(s), basis).beta for s in samples])


@dataclass
class FittedModel:
    """Everything needed to predict a distribution at a new configuration."""

    variant: str
    order: int
    num_knots: int
    V: np.ndarray
    singular_values: np.ndarray
    X: np.ndarray
    codes: np.ndarray
    W: np.ndarray
    components: list
    categories: list
    numeric_names: tuple = ()
    categorical_names: tuple = ()
    transforms: dict = field(default_factory=dict)
    outcome_scale: float = 1.0
    truncate_intercept: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_components(self):
        return len(self.components)

    @property
    def basis(self):
        if "basis" not in self._cache:
            self._cache["basis"] = build_basis(self.order, self.num_knots)
        return self._cache["basis"]

    def component_data(self, j):
        return ComponentData(self.W[:, j], self.X, self.codes, len(self.categories))

    def _weights(self, j):
        key = ("weights", j)
        if key not in self._cache:
            self._cache[key] = training_weights(self.component_data(j), self.components[j])
        return self._cache[key]

    def category_code(self, z):
        z = (z,) if isinstance(z, str) else tuple(str(v) for v in z)
        try:
            return self.categories.index(z)
        except ValueError:
            raise ValueError(f"category not in training set: {z}") from None

    def to_model_scale(self, x_raw):
        return apply_transforms(x_raw, self.numeric_names, self.transforms)

    def predict_scores(self, x0, k0):
        """Predicted scores ``w0`` (length ``d'``) at model-scale inputs and category code."""
        x0 = np.asarray(x0, dtype=float)
        return np.array([predict_w(x0, k0, self.component_data(j), self.components[j],
                                   weights=self._weights(j))
                         for j in range(self.n_components)])

    def predict_fit(self, x0, k0):
        w0 = self.predict_scores(x0, k0)
        return reconstruct_beta(w0, self.V_full, self.n_components, self.truncate_intercept)

    @property
    def V_full(self):
        # reconstruct_beta only reads the first d' columns
        d = self.V.shape[0]
        if self.V.shape[1] == d:
            return self.V
        out = np.zeros((d, d))
        out[:, :self.V.shape[1]] = self.V
        return out

    def to_dict(self):
        return {
            "format": _FORMAT_NAME,
            "version": FORMAT_VERSION,
            "variant": self.variant,
            "basis": {"order": self.order, "num_interior_knots": self.num_knots},
            "V": self.V.tolist(),
            "singular_values": self.singular_values.tolist(),
            "X": self.X.tolist(),
            "codes": self.codes.tolist(),
            "W": self.W.tolist(),
            "components": [c.to_dict() for c in self.components],
            "categories": [list(z) for z in self.categories],
            "numeric_names": list(self.numeric_names),
            "categorical_names": list(self.categorical_names),
            "transforms": dict(self.transforms),
            "outcome_scale": self.outcome_scale,
            "truncate_intercept": self.truncate_intercept,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != _FORMAT_NAME:
            raise ValueError("not a serialized quantgp model")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d.get('version')}")
        return cls(
            variant=d["variant"],
            order=int(d["basis"]["order"]),
            num_knots=int(d["basis"]["num_interior_knots"]),
            V=np.array(d["V"], dtype=float),
            singular_values=np.array(d["singular_values"], dtype=float),
            X=np.array(d["X"], dtype=float).reshape(len(d["codes"]), -1),
            codes=np.array(d["codes"], dtype=int),
            W=np.array(d["W"], dtype=float).reshape(len(d["codes"]), -1),
            components=[LMGPParams.from_dict(c) for c in d["components"]],
            categories=[tuple(z) for z in d["categories"]],
            numeric_names=tuple(d["numeric_names"]),
            categorical_names=tuple(d["categorical_names"]),
            transforms=dict(d["transforms"]),
            outcome_scale=float(d["outcome_scale"]),
            truncate_intercept=bool(d["truncate_intercept"]),
        )


def fit_model(dataset, variant="lmgp-s", n_components=DEFAULT_NUM_COMPONENTS, svd_threshold=None,
              order=3, num_knots=20, config=None, truncate_intercept=False, B=None):
    """Fit the full distributional model to a (preprocessed) dataset.

    ``n_components`` fixes ``d'``; passing ``svd_threshold`` instead picks
    the smallest ``d'`` whose singular values reach that fraction.
    ``B`` may carry precomputed smoothed coefficients, one row per
    dataset row.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    basis = build_basis(order, num_knots)
    if B is None:
        B = coefficient_matrix(dataset.samples, basis)
    elif B.shape != (len(dataset), basis.num_coefficients):
        raise ValueError("precomputed coefficients do not match dataset and basis")
    factors = decompose(B)
    d = B.shape[1]
    if svd_threshold is not None:
        k = select_components(factors.Lambda, svd_threshold)
    else:
        k = min(int(n_components), d)
    if k < 1:
        raise ValueError("need at least one SVD component")
    codes = dataset.codes
    categories = dataset.categories
    comps = []
    for j in range(k):
        data = ComponentData(factors.W[:, j], dataset.X, codes, len(categories))
        comps.append(fit_em(data, variant, config or EMConfig()))
    return FittedModel(
        variant=variant, order=order, num_knots=num_knots,
        V=factors.V[:, :k].copy(), singular_values=factors.Lambda.copy(),
        X=dataset.X.copy(), codes=codes, W=factors.W[:, :k].copy(),
        components=comps, categories=list(categories),
        numeric_names=tuple(dataset.numeric_names),
        categorical_names=tuple(dataset.categorical_names),
        transforms=dict(dataset.transforms), outcome_scale=dataset.outcome_scale,
        truncate_intercept=truncate_intercept,
    )


def _outside_box(model, x0):
    lo, hi = model.X.min(axis=0), model.X.max(axis=0)
    return bool(np.any(x0 < lo) or np.any(x0 > hi))


def predict_distribution(x0, z0, model, p_grid=None, raw=True, y_grid=None):
    """Predicted quantile function (and optionally CDF) at one configuration.

    Parameters
    ----------
    x0 : array-like
        Numeric inputs, raw scale unless ``raw=False``.
    z0 : str or tuple of str
        Categorical combination; must have been seen in training.
    p_grid : array-like, optional
        Probabilities at which to evaluate the quantile function
        (default 1001 points on [0, 1]).
    y_grid : array-like, optional
        Outcome values at which to evaluate the CDF.

    Returns
    -------
    dict
        ``fit`` (QuantileFit), ``p`` and ``quantiles``; ``y`` and ``cdf``
        when ``y_grid`` is given.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if raw:
        x0 = model.to_model_scale(x0)
    k0 = model.category_code(z0)
    if _outside_box(model, x0):
        warnings.warn("prediction point lies outside the training bounding box", stacklevel=2)
    fit = model.predict_fit(x0, k0)
    p = np.linspace(0.0, 1.0, 1001) if p_grid is None else np.asarray(p_grid, dtype=float)
    out = {"fit": fit, "p": p, "quantiles": eval_quantile(fit, model.basis, p)}
    if y_grid is not None:
        y = np.asarray(y_grid, dtype=float)
        out["y"] = y
        out["cdf"] = quantile_to_cdf_values(fit, model.basis, y)
    return out


def save_model(model, path):
    """Write a model as versioned JSON; floats round-trip exactly."""
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)


def load_model(path):
    with open(path) as fh:
        return FittedModel.from_dict(json.load(fh))
