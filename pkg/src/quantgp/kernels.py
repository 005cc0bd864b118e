"""
Correlation matrices for the linear mixed Gaussian process.

Two components are built here. The within-category matrix ``Omega_eps``
is block diagonal, each block an anisotropic squared-exponential
correlation plus a nugget. The between-category matrix ``Omega_alpha``
multiplies a category correlation ``P = L L^T`` (hypersphere angles) by a
compactly supported truncated-power kernel of the Euclidean distance.

Rows are always assumed to be sorted by category code.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

__all__ = [
    "NumericKernelParams",
    "CategoryCorrelationParams",
    "gauss_corr",
    "sq_diffs",
    "gauss_kernel",
    "build_omega_eps",
    "omega_eps_blocks",
    "wendland",
    "min_wendland_exponent",
    "default_r_max",
    "hypersphere_P",
    "hypersphere_P_grad",
    "n_angles",
    "category_blocks",
    "build_omega_alpha",
    "omega_alpha_kron",
    "indicator_matrix",
]


@dataclass(frozen=True)
class NumericKernelParams:
    """Length-scales ``nu`` (one per numeric input) and nugget ``g``."""

    nu: np.ndarray
    g: float = 0.0

    def __post_init__(self):
        nu = np.atleast_1d(np.asarray(self.nu, dtype=float))
        if np.any(~(nu > 0)):
            raise ValueError("length-scales must be positive")
        if not self.g >= 0:
            raise ValueError("nugget must be nonnegative")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "g", float(self.g))


@dataclass(frozen=True)
class CategoryCorrelationParams:
    """Hypersphere angles plus compact-support range and exponent.

    ``r_max = inf`` switches the distance kernel off (``kappa == 1``),
    which is the categorical-GP structure.
    """

    thetas: np.ndarray
    r_max: float
    v: float

    def __post_init__(self):
        thetas = np.atleast_1d(np.asarray(self.thetas, dtype=float))
        if np.any(~((thetas > 0) & (thetas < np.pi))):
            raise ValueError("hypersphere angles must lie in (0, pi)")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if not self.v > 0:
            raise ValueError("kernel exponent v must be positive")
        object.__setattr__(self, "thetas", thetas)


def _check_pair(x1, x2):
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x1.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x1.shape} vs {x2.shape}")
    return x1, x2


def gauss_corr(x1, x2, params, same_index=False):
    """``exp(-sum_l (x1_l - x2_l)^2 / nu_l) + g * [same_index]``."""
    x1, x2 = _check_pair(x1, x2)
    if x1.size != params.nu.size:
        raise ValueError(f"dimension mismatch: {x1.size} inputs vs {params.nu.size} length-scales")
    val = np.exp(-np.sum((x1 - x2) ** 2 / params.nu))
    return float(val + (params.g if same_index else 0.0))


def sq_diffs(X1, X2=None):
    """Per-dimension squared differences, shape ``(p, n1, n2)``."""
    X1 = np.atleast_2d(X1)
    X2 = X1 if X2 is None else np.atleast_2d(X2)
    return (X1.T[:, :, None] - X2.T[:, None, :]) ** 2


def gauss_kernel(X1, X2, nu):
    """Squared-exponential cross-correlation without nugget."""
    D = sq_diffs(X1, X2)
    return np.exp(-np.tensordot(1.0 / np.asarray(nu, dtype=float), D, axes=1))


def category_blocks(codes):
    """Slices of contiguous category runs; raises if rows are not sorted."""
    codes = np.asarray(codes)
    if codes.size and np.any(np.diff(codes) < 0):
        raise ValueError("data must be category-sorted")
    c = int(codes.max()) + 1 if codes.size else 0
    counts = np.bincount(codes, minlength=c) if codes.size else np.zeros(0, int)
    edges = np.concatenate([[0], np.cumsum(counts)])
    return [slice(int(edges[k]), int(edges[k + 1])) for k in range(c)]


def _per_category(params, c):
    if isinstance(params, NumericKernelParams):
        return [params] * c
    params = list(params)
    if len(params) != c:
        raise ValueError(f"expected {c} per-category kernel settings, got {len(params)}")
    return params


def omega_eps_blocks(X, codes, params):
    """Diagonal blocks ``Omega_eps,k`` in category order.

    ``params`` is a single :class:`NumericKernelParams` shared by all
    categories, or a sequence with one entry per category.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    blocks = category_blocks(codes)
    plist = _per_category(params, len(blocks))
    out = []
    for sl, prm in zip(blocks, plist):
        Xk = X[sl]
        if Xk.shape[1] != prm.nu.size:
            raise ValueError("dimension mismatch between X and length-scales")
        Kk = gauss_kernel(Xk, Xk, prm.nu)
        Kk[np.diag_indices_from(Kk)] += prm.g
        out.append(Kk)
    return out


def build_omega_eps(X, codes, params):
    """Block-diagonal within-category correlation matrix."""
    blocks = omega_eps_blocks(X, codes, params)
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    start = 0
    for b in blocks:
        m = b.shape[0]
        out[start:start + m, start:start + m] = b
        start += m
    return out


def wendland(r, r_max, v):
    """Truncated power kernel ``(1 - r / r_max)_+^v``; identically 1 when ``r_max`` is infinite."""
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be nonnegative")
    if np.isinf(r_max):
        out = np.ones_like(r)
    else:
        out = np.maximum(1.0 - r / r_max, 0.0) ** v
    return float(out) if out.ndim == 0 else out


def min_wendland_exponent(p):
    """Smallest exponent ``floor(p/2) + 1`` keeping the kernel PD in ``R^p``."""
    return p // 2 + 1


def default_r_max(X):
    """Median pairwise Euclidean distance of the numeric inputs."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 2:
        return 1.0
    d = pdist(X)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def n_angles(c):
    return c * (c - 1) // 2


def _angle_index(c):
    # (k, s) pairs, k = 1..c-1 (0-based row), s = 0..k-1, row-major
    return [(k, s) for k in range(1, c) for s in range(k)]


def _cholesky_rows(thetas, c):
    L = np.zeros((c, c))
    L[0, 0] = 1.0
    pos = 0
    for k in range(1, c):
        th = thetas[pos:pos + k]
        pos += k
        sin_prod = 1.0
        for s in range(k):
            L[k, s] = sin_prod * np.cos(th[s])
            sin_prod *= np.sin(th[s])
        L[k, k] = sin_prod
    return L


def hypersphere_P(thetas, c):
    """Unit-diagonal correlation ``P = L L^T`` from hypersphere angles.

    Angles are ordered row by row: ``theta_21, theta_31, theta_32, ...``.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if thetas.size != n_angles(c):
        raise ValueError(f"{c} categories need {n_angles(c)} angles, got {thetas.size}")
    if np.any(~((thetas > 0) & (thetas < np.pi))):
        raise ValueError("hypersphere angles must lie in (0, pi)")
    L = _cholesky_rows(thetas, c)
    return L @ L.T, L


def hypersphere_P_grad(thetas, c):
    """Derivatives ``dP / dtheta`` for every angle, shape ``(n_angles, c, c)``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    _, L = hypersphere_P(thetas, c)
    grads = np.zeros((thetas.size, c, c))
    pos = 0
    for k in range(1, c):
        th = thetas[pos:pos + k]
        sin, cos = np.sin(th), np.cos(th)
        for s in range(k):
            dL = np.zeros((c, c))
            # row k entries j >= s depend on theta_ks
            for j in range(s, k + 1):
                prod = 1.0
                for i in range(min(j, k)):
                    prod *= cos[i] if i == s else sin[i]
                if j < k:
                    prod *= -sin[j] if j == s else cos[j]
                dL[k, j] = prod
            grads[pos + s] = dL @ L.T + L @ dL.T
        pos += k
    return grads


def _distance(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.sqrt(sq_diffs(X).sum(axis=0))


def build_omega_alpha(X, codes, params):
    """Between-category correlation ``rho(z_i, z_j) * kappa(||x_i - x_j||)``."""
    codes = np.asarray(codes)
    category_blocks(codes)
    c = int(codes.max()) + 1
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if np.isfinite(params.r_max) and params.v < min_wendland_exponent(X.shape[1]):
        raise ValueError(f"kernel exponent v={params.v} below the positive-definiteness bound "
                         f"{min_wendland_exponent(X.shape[1])} for p={X.shape[1]}")
    P, _ = hypersphere_P(params.thetas, c)
    Phi = wendland(_distance(X), params.r_max, params.v)
    return P[np.ix_(codes, codes)] * Phi


def indicator_matrix(codes, c=None):
    """Selection matrix ``A`` of shape ``(c n, n)``: column ``i`` picks slot ``k_i n + i``."""
    codes = np.asarray(codes)
    n = codes.size
    c = int(codes.max()) + 1 if c is None else c
    A = np.zeros((c * n, n))
    A[codes * n + np.arange(n), np.arange(n)] = 1.0
    return A


def omega_alpha_kron(X, codes, params):
    """``A^T (P kron Phi) A``; an independent route to :func:`build_omega_alpha`."""
    codes = np.asarray(codes)
    c = int(codes.max()) + 1
    P, _ = hypersphere_P(params.thetas, c)
    Phi = wendland(_distance(X), params.r_max, params.v)
    A = indicator_matrix(codes, c)
    return A.T @ np.kron(P, Phi) @ A
