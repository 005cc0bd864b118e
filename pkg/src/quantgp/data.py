"""Replicated-measurement datasets: CSV ingestion, grouping, sorting, transforms."""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = ["Dataset", "load_dataset", "preprocess", "apply_transforms", "write_dataset"]

_TRANSFORMS = {
    "log2": np.log2,
    "identity": lambda a: a,
}


@dataclass(frozen=True)
class Dataset:
    """Configurations with their replicate samples.

    Rows are sorted by categorical combination (lexicographic), then by the
    numeric inputs, and no two rows share the same ``(x, z)``.

    Attributes
    ----------
    X : ndarray
        ``n x p`` numeric inputs on the model scale (after transforms).
    Z : list of tuple of str
        Categorical combination of each row.
    samples : list of ndarray
        Replicate outcome values per row.
    numeric_names, categorical_names : tuple of str
    outcome_name : str
    transforms : dict
        Column name to transform name, applied to raw numeric inputs.
    outcome_scale : float
        Multiplier applied to raw outcome values.
    """

    X: np.ndarray
    Z: list
    samples: list
    numeric_names: tuple = ()
    categorical_names: tuple = ()
    outcome_name: str = "y"
    transforms: dict = field(default_factory=dict)
    outcome_scale: float = 1.0

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[0] != len(self.samples) or X.shape[0] != len(self.Z):
            raise ValueError("configs and samples must have the same length")
        Z = [tuple(str(v) for v in z) for z in self.Z]
        samples = [np.asarray(s, dtype=float).ravel() for s in self.samples]
        if any(s.size == 0 for s in samples):
            raise ValueError("empty replicate set")
        order = sorted(range(len(Z)), key=lambda i: (Z[i], tuple(X[i])))
        X = X[order]
        Z = [Z[i] for i in order]
        samples = [samples[i] for i in order]
        for i in range(1, len(Z)):
            if Z[i] == Z[i - 1] and np.array_equal(X[i], X[i - 1]):
                raise ValueError(f"duplicate configuration {Z[i]} {X[i].tolist()}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "samples", samples)
        if not self.numeric_names:
            object.__setattr__(self, "numeric_names", tuple(f"x{j}" for j in range(X.shape[1])))
        if not self.categorical_names:
            q = len(Z[0]) if Z else 0
            object.__setattr__(self, "categorical_names", tuple(f"z{j}" for j in range(q)))

    def __len__(self):
        return len(self.samples)

    @property
    def categories(self):
        """Sorted unique categorical combinations."""
        return sorted(set(self.Z))

    @property
    def codes(self):
        lookup = {z: k for k, z in enumerate(self.categories)}
        return np.array([lookup[z] for z in self.Z], dtype=int)

    @property
    def replicate_counts(self):
        return np.array([s.size for s in self.samples])

    def subset(self, indices):
        idx = sorted(int(i) for i in indices)
        return replace(self, X=self.X[idx], Z=[self.Z[i] for i in idx],
                       samples=[self.samples[i] for i in idx])


def _parse_float(text, lineno, column):
    try:
        val = float(text)
    except (TypeError, ValueError):
        raise ValueError(f"line {lineno}: column {column!r} is not numeric: {text!r}") from None
    if not np.isfinite(val):
        raise ValueError(f"line {lineno}: column {column!r} is not finite: {text!r}")
    return val


def load_dataset(path, numeric, categorical, outcome, delimiter=","):
    """Read a long-format CSV with one row per replicate.

    Parameters
    ----------
    path : str or path-like
    numeric, categorical : sequence of str
        Column names of the numeric and categorical factors.
    outcome : str
        Column holding the measured outcome.

    Returns
    -------
    Dataset
        Replicates grouped per unique ``(x, z)``, rows category-sorted.
    """
    numeric, categorical = list(numeric), list(categorical)
    groups = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        missing = [c for c in numeric + categorical + [outcome] if c not in header]
        if missing:
            raise ValueError(f"line 1: missing columns {missing}")
        for row in reader:
            lineno = reader.line_num
            x = tuple(_parse_float(row[c], lineno, c) for c in numeric)
            z = tuple(row[c].strip() for c in categorical)
            if any(v == "" for v in z):
                raise ValueError(f"line {lineno}: empty categorical value")
            y = _parse_float(row[outcome], lineno, outcome)
            groups.setdefault((z, x), []).append(y)
    if not groups:
        raise ValueError(f"{path}: no data rows")
    keys = list(groups)
    return Dataset(
        X=np.array([k[1] for k in keys], dtype=float).reshape(len(keys), len(numeric)),
        Z=[k[0] for k in keys],
        samples=[groups[k] for k in keys],
        numeric_names=tuple(numeric),
        categorical_names=tuple(categorical),
        outcome_name=outcome,
    )


def write_dataset(dataset, path, raw=True):
    """Write a dataset back to long-format CSV (raw numeric scale by default)."""
    X = dataset.X
    if raw and dataset.transforms:
        X = X.copy()
        for j, name in enumerate(dataset.numeric_names):
            if dataset.transforms.get(name) == "log2":
                X[:, j] = 2.0 ** X[:, j]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.numeric_names) + list(dataset.categorical_names)
                        + [dataset.outcome_name])
        for x, z, s in zip(X, dataset.Z, dataset.samples):
            scale = dataset.outcome_scale if raw else 1.0
            for y in s:
                writer.writerow([repr(float(v)) for v in x] + list(z) + [repr(float(y / scale))])


def apply_transforms(x_raw, numeric_names, transforms):
    """Map raw numeric inputs (vector or matrix) to the model scale."""
    x = np.array(x_raw, dtype=float)
    cols = x if x.ndim == 2 else x[None, :]
    for j, name in enumerate(numeric_names):
        kind = transforms.get(name, "identity")
        if kind not in _TRANSFORMS:
            raise ValueError(f"unknown transform {kind!r} for {name!r}")
        if kind == "log2" and np.any(cols[:, j] <= 0):
            raise ValueError(f"log2 of nonpositive value in column {name!r}")
        cols[:, j] = _TRANSFORMS[kind](cols[:, j])
    return cols if x.ndim == 2 else cols[0]


def preprocess(dataset, transforms=None, outcome_scale=None):
    """Apply column transforms (e.g. ``{"file_size": "log2"}``) and outcome rescaling.

    The transform record is kept on the returned dataset so raw-scale
    inputs can be mapped at prediction time.
    """
    transforms = dict(transforms or {})
    unknown = [c for c in transforms if c not in dataset.numeric_names]
    if unknown:
        raise ValueError(f"transform columns not in dataset: {unknown}")
    if dataset.transforms:
        raise ValueError("dataset is already preprocessed")
    X = apply_transforms(dataset.X, dataset.numeric_names, transforms)
    scale = 1.0 if outcome_scale is None else float(outcome_scale)
    samples = [s * scale for s in dataset.samples]
    return replace(dataset, X=X, samples=samples, transforms=transforms,
                   outcome_scale=scale * dataset.outcome_scale)
