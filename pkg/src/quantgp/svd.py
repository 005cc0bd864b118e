"""SVD decorrelation of the spline coefficient matrix."""

from dataclasses import dataclass

import numpy as np

from .curves import QuantileFit

__all__ = ["SVDFactors", "decompose", "select_components", "reconstruct_beta"]

DEFAULT_NUM_COMPONENTS = 12
DEFAULT_THRESHOLD = 0.8


@dataclass(frozen=True)
class SVDFactors:
    """Thin decomposition ``B = U diag(Lambda) V^T`` with scores ``W = B V``.

    ``U`` has ``min(n, d)`` columns; ``V`` is the full ``d x d`` right
    factor. When ``n < d`` the trailing singular values are zero and the
    matching score columns vanish.
    """

    U: np.ndarray
    Lambda: np.ndarray
    V: np.ndarray
    W: np.ndarray

    @property
    def shape(self):
        return self.U.shape[0], self.V.shape[0]


def decompose(B):
    """Singular value decomposition of an ``n x d`` coefficient matrix."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] < 1 or B.shape[1] < 1:
        raise ValueError("coefficient matrix must be a nonempty 2-D array")
    if not np.all(np.isfinite(B)):
        raise ValueError("coefficient matrix contains non-finite entries")
    n, d = B.shape
    U, s, Vt = np.linalg.svd(B, full_matrices=True)
    U = U[:, :min(n, d)]
    Lambda = np.zeros(d)
    Lambda[:s.size] = s
    V = Vt.T
    W = B @ V
    return SVDFactors(U=U, Lambda=Lambda, V=V, W=W)


def select_components(Lambda, threshold=DEFAULT_THRESHOLD):
    """Smallest ``d'`` whose leading singular values reach ``threshold`` of the total."""
    lam = np.asarray(Lambda, dtype=float).ravel()
    if lam.size == 0 or np.any(lam < 0):
        raise ValueError("singular values must be nonnegative")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    total = lam.sum()
    if total <= 0:
        raise ValueError("all singular values are zero")
    frac = np.cumsum(lam) / total
    # guard the last entry against roundoff so threshold=1 is always attainable
    frac[-1] = 1.0
    return int(np.searchsorted(frac, threshold - 1e-12 * threshold) + 1)


def reconstruct_beta(w0, V, n_components=None, truncate_intercept=False):
    """Map predicted scores back to monotone spline coefficients.

    ``beta = w0 @ V[:, :d'].T`` followed by clipping negative spline
    coefficients to zero. The intercept is left alone unless
    ``truncate_intercept`` is set.
    """
    w0 = np.asarray(w0, dtype=float).ravel()
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ValueError("V must be a square matrix")
    k = w0.size if n_components is None else int(n_components)
    if k != w0.size or k > V.shape[1] or k < 1:
        raise ValueError(
            f"score vector of length {w0.size} does not match d'={k} for d={V.shape[1]}")
    beta = w0 @ V[:, :k].T
    start = 0 if truncate_intercept else 1
    beta[start:] = np.maximum(beta[start:], 0.0)
    return QuantileFit(beta)
