"""
Linear mixed Gaussian process ``w = mu + alpha + eps`` fitted by EM.

``eps`` is a within-category Gaussian process (block-diagonal covariance),
``alpha`` a between-category random field whose correlation is the
category correlation ``P`` times a compactly supported distance kernel.
Four variants share this code:

``gp``
    separate Gaussian process per category (no ``alpha``).
``cgp``
    shared ``eps`` parameters, ``alpha`` with the distance kernel switched
    off (``kappa == 1``).
``lmgp``
    shared ``eps`` parameters, compact-support ``alpha``.
``lmgp-s``
    per-category ``mu``, ``sigma2_eps``, ``nu``, ``g``; shared ``alpha``.

The E-step centres the posterior of ``alpha`` to sum to zero. The M-step
updates ``mu``, ``sigma2_eps`` and ``sigma2_alpha`` in closed form and
maximizes profile objectives over ``(nu, g)`` and the hypersphere angles
with L-BFGS-B using analytic gradients (``mu`` held fixed while the
length-scales move).
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.special import expit

from .kernels import (
    category_blocks,
    default_r_max,
    gauss_kernel,
    hypersphere_P,
    hypersphere_P_grad,
    min_wendland_exponent,
    n_angles,
    sq_diffs,
    wendland,
)

logger = logging.getLogger(__name__)

__all__ = [
    "VARIANTS",
    "CovarianceError",
    "ComponentData",
    "LMGPParams",
    "AlphaPosterior",
    "EMConfig",
    "initial_params",
    "sigma_eps",
    "sigma_alpha",
    "e_step",
    "q1",
    "q2",
    "m_step_closed",
    "profile_q1",
    "profile_q2",
    "profile_gradients",
    "fit_em",
    "fit_em_per_category",
    "predict_w",
]

VARIANTS = ("gp", "cgp", "lmgp", "lmgp-s")
_PER_CATEGORY = ("gp", "lmgp-s")
_LOG2PI = np.log(2 * np.pi)


class CovarianceError(LinAlgError):
    """A covariance matrix could not be factorized even with jitter."""


def _chol(M, what="covariance"):
    """Cholesky factor with jitter escalation 1e-10 .. 1e-6 (relative to the mean diagonal)."""
    if not np.all(np.isfinite(M)):
        raise CovarianceError(f"{what} has non-finite entries")
    try:
        return cho_factor(M, lower=True, check_finite=False)
    except LinAlgError:
        pass
    scale = max(float(np.mean(np.diag(M))), np.finfo(float).tiny)
    jitter = 1e-10
    while jitter <= 1e-6 * (1 + 1e-9):
        try:
            cf = cho_factor(M + jitter * scale * np.eye(M.shape[0]), lower=True, check_finite=False)
            logger.debug("%s needed jitter %.1e", what, jitter)
            return cf
        except LinAlgError:
            jitter *= 10
    raise CovarianceError(f"{what} singular; increase nugget")


def _logdet(cf):
    return 2.0 * np.sum(np.log(np.diag(cf[0])))


def _center(v):
    return v - v.mean()


def _center2(M):
    return M - M.mean(axis=0, keepdims=True) - M.mean(axis=1, keepdims=True) + M.mean()


@dataclass(frozen=True)
class ComponentData:
    """One column of SVD scores with its inputs, rows grouped by category code."""

    w: np.ndarray
    X: np.ndarray
    codes: np.ndarray
    n_categories: int = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        codes = np.asarray(self.codes, dtype=int).ravel()
        if not (w.size == X.shape[0] == codes.size):
            raise ValueError("w, X and codes must have the same number of rows")
        if codes.size and codes.min() < 0:
            raise ValueError("category codes must be nonnegative")
        category_blocks(codes)
        c = int(codes.max()) + 1 if self.n_categories is None else int(self.n_categories)
        if np.any(np.bincount(codes, minlength=c)[:c] == 0) or codes.max() >= c:
            raise ValueError("every category must appear in the training data")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "n_categories", c)

    @property
    def n(self):
        return self.w.size

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def blocks(self):
        return category_blocks(self.codes)

    @property
    def category_sizes(self):
        return np.bincount(self.codes, minlength=self.n_categories)

    def with_w(self, w):
        return replace(self, w=np.asarray(w, dtype=float))


@dataclass
class LMGPParams:
    """Parameters of one component model.

    Per-category arrays are stored for every variant; shared variants keep
    identical rows.
    """

    variant: str
    mu: np.ndarray
    sigma2_eps: np.ndarray
    nu: np.ndarray
    g: np.ndarray
    sigma2_alpha: float
    thetas: np.ndarray
    r_max: float
    v: float
    converged: bool = True
    n_iter: int = 0
    trace: list = field(default_factory=list)
    loglik_trace: list = field(default_factory=list)
    ascent: list = field(default_factory=list)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        self.sigma2_eps = np.atleast_1d(np.asarray(self.sigma2_eps, dtype=float))
        self.nu = np.atleast_2d(np.asarray(self.nu, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        self.thetas = np.atleast_1d(np.asarray(self.thetas, dtype=float))
        self.sigma2_alpha = float(self.sigma2_alpha)
        self.r_max = float(self.r_max)
        self.v = float(self.v)
        c = self.mu.size
        if not (self.sigma2_eps.size == self.g.size == self.nu.shape[0] == c):
            raise ValueError("per-category parameter arrays disagree in length")
        if self.thetas.size != n_angles(c):
            raise ValueError(f"{c} categories need {n_angles(c)} angles")
        if np.any(self.sigma2_eps <= 0) or np.any(self.nu <= 0) or np.any(self.g < 0):
            raise ValueError("sigma2_eps and nu must be positive, g nonnegative")
        if self.sigma2_alpha < 0:
            raise ValueError("sigma2_alpha must be nonnegative")
        if np.any((self.thetas <= 0) | (self.thetas >= np.pi)):
            raise ValueError("hypersphere angles must lie in (0, pi)")

    @property
    def n_categories(self):
        return self.mu.size

    @property
    def per_category(self):
        return self.variant in _PER_CATEGORY

    @property
    def has_alpha(self):
        return self.variant != "gp" and self.sigma2_alpha > 0

    def copy(self):
        return replace(self, mu=self.mu.copy(), sigma2_eps=self.sigma2_eps.copy(),
                       nu=self.nu.copy(), g=self.g.copy(), thetas=self.thetas.copy(),
                       trace=list(self.trace), loglik_trace=list(self.loglik_trace),
                       ascent=list(self.ascent))

    def to_dict(self):
        return {
            "variant": self.variant,
            "mu": self.mu.tolist(),
            "sigma2_eps": self.sigma2_eps.tolist(),
            "nu": self.nu.tolist(),
            "g": self.g.tolist(),
            "sigma2_alpha": self.sigma2_alpha,
            "thetas": self.thetas.tolist(),
            "r_max": self.r_max,
            "v": self.v,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "trace": list(map(float, self.trace)),
            "loglik_trace": list(map(float, self.loglik_trace)),
            "ascent": list(map(float, self.ascent)),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class AlphaPosterior:
    """Zero-sum-centred posterior of ``alpha`` given ``w``.

    ``loglik`` is the observed-data log-likelihood at the parameters that
    produced this posterior.
    """

    mean: np.ndarray
    cov: np.ndarray
    loglik: float = float("nan")


@dataclass
class EMConfig:
    """EM settings.

    ``inner_maxiter`` caps L-BFGS-B iterations inside each M-step (a
    generalized EM when small). ``fixed_nugget`` pins ``g``. ``starts``
    optionally supplies initial parameters.
    """

    max_iter: int = 200
    tol: float = 1e-6
    inner_maxiter: int = 100
    fixed_nugget: float = None
    r_max: float = None
    v: float = None
    starts: LMGPParams = None


# ---------------------------------------------------------------------------
# covariance assembly


def _eps_blocks(data, params, sigma=True):
    """Per-category ``Omega_eps,k`` (or ``Sigma_eps,k``) plus the raw kernels."""
    out = []
    for k, sl in enumerate(data.blocks):
        K = gauss_kernel(data.X[sl], data.X[sl], params.nu[k])
        Om = K.copy()
        Om[np.diag_indices_from(Om)] += params.g[k]
        if sigma:
            Om = params.sigma2_eps[k] * Om
        out.append(Om)
    return out


def sigma_eps(data, params):
    """Full block-diagonal ``Sigma_eps``."""
    S = np.zeros((data.n, data.n))
    for sl, blk in zip(data.blocks, _eps_blocks(data, params)):
        S[sl, sl] = blk
    return S


def _phi(X, r_max, v):
    D = np.sqrt(sq_diffs(X).sum(axis=0))
    return wendland(D, r_max, v)


def _omega_alpha(data, params, Phi=None):
    c = data.n_categories
    P, _ = hypersphere_P(params.thetas, c) if c > 1 else (np.ones((1, 1)), None)
    if Phi is None:
        Phi = _phi(data.X, params.r_max, params.v)
    return P[np.ix_(data.codes, data.codes)] * Phi


def sigma_alpha(data, params):
    """``sigma2_alpha * Omega_alpha``; zeros for the ``gp`` variant."""
    if params.variant == "gp":
        return np.zeros((data.n, data.n))
    return params.sigma2_alpha * _omega_alpha(data, params)


def _mu_vec(data, params):
    return params.mu[data.codes]


# ---------------------------------------------------------------------------
# E-step and Q functions


def e_step(data, params):
    """Centred conditional distribution of ``alpha`` given ``w``."""
    n = data.n
    r = data.w - _mu_vec(data, params)
    Se = sigma_eps(data, params)
    if not params.has_alpha:
        cf = _chol(Se, "covariance")
        ll = -0.5 * (r @ cho_solve(cf, r) + _logdet(cf) + n * _LOG2PI)
        return AlphaPosterior(np.zeros(n), np.zeros((n, n)), float(ll))
    Sa = sigma_alpha(data, params)
    cf = _chol(Sa + Se, "covariance")
    Sinv_r = cho_solve(cf, r)
    Sinv_Sa = cho_solve(cf, Sa)
    mean = _center(Sa @ Sinv_r)
    cov = _center2(Sa - Sa @ Sinv_Sa)
    cov = 0.5 * (cov + cov.T)
    ll = -0.5 * (r @ Sinv_r + _logdet(cf) + n * _LOG2PI)
    return AlphaPosterior(mean, cov, float(ll))


def q1(params, data, posterior):
    """Expected complete-data log-likelihood of ``w | alpha``."""
    e = data.w - _mu_vec(data, params) - posterior.mean
    total = 0.0
    for sl, blk in zip(data.blocks, _eps_blocks(data, params)):
        cf = _chol(blk, "Sigma_eps")
        ek = e[sl]
        total += -0.5 * (sl.stop - sl.start) * _LOG2PI - 0.5 * _logdet(cf) \
            - 0.5 * ek @ cho_solve(cf, ek) \
            - 0.5 * np.trace(cho_solve(cf, posterior.cov[sl, sl]))
    return float(total)


def _alpha_latent_stats(data, N):
    """Block averages ``D^-1 A^T N A D^-1`` used when ``kappa == 1``."""
    c = data.n_categories
    A = np.zeros((data.n, c))
    A[np.arange(data.n), data.codes] = 1.0
    sizes = data.category_sizes.astype(float)
    return (A.T @ N @ A) / np.outer(sizes, sizes)


def q2(params, data, posterior):
    """Expected log-density of ``alpha``; zero when the model has no ``alpha``.

    With ``kappa == 1`` the correlation ``A P A^T`` has rank ``c`` and the
    degenerate normal density on its range is used.
    """
    if not params.has_alpha:
        return 0.0
    N = posterior.cov + np.outer(posterior.mean, posterior.mean)
    s2 = params.sigma2_alpha
    c = data.n_categories
    if np.isinf(params.r_max):
        P, _ = hypersphere_P(params.thetas, c) if c > 1 else (np.ones((1, 1)), None)
        Nt = _alpha_latent_stats(data, N)
        cf = _chol(P, "P")
        logpdet = _logdet(cf) + np.sum(np.log(data.category_sizes))
        return float(-0.5 * c * (_LOG2PI + np.log(s2)) - 0.5 * logpdet
                     - 0.5 * np.trace(cho_solve(cf, Nt)) / s2)
    Om = _omega_alpha(data, params)
    cf = _chol(Om, "Omega_alpha")
    n = data.n
    return float(-0.5 * n * (_LOG2PI + np.log(s2)) - 0.5 * _logdet(cf)
                 - 0.5 * np.trace(cho_solve(cf, N)) / s2)


# ---------------------------------------------------------------------------
# closed-form M-step pieces


def _gls_mean(blocks_cf, resid):
    """``1^T Om^-1 resid / 1^T Om^-1 1`` summed over blocks."""
    num = den = 0.0
    for cf, rk in zip(blocks_cf, resid):
        ones = np.ones(rk.size)
        oi1 = cho_solve(cf, ones)
        num += oi1 @ rk
        den += oi1 @ ones
    if not den > 0:
        raise ValueError("zero denominator in mean update")
    return num / den


def _sigma2_eps_hat(blocks_cf, e_blocks, S_blocks):
    total = 0.0
    n = 0
    for cf, ek, Sk in zip(blocks_cf, e_blocks, S_blocks):
        total += ek @ cho_solve(cf, ek) + np.trace(cho_solve(cf, Sk))
        n += ek.size
    return total / n


def _pseudo_factor(M):
    """Inverse and rank of a symmetric PSD matrix (pseudo-inverse if singular)."""
    try:
        cf = cho_factor(M, lower=True, check_finite=False)
        return cho_solve(cf, np.eye(M.shape[0])), M.shape[0]
    except LinAlgError:
        vals, vecs = np.linalg.eigh(M)
        keep = vals > vals.max() * M.shape[0] * np.finfo(float).eps * 10
        inv = (vecs[:, keep] / vals[keep]) @ vecs[:, keep].T
        return inv, int(keep.sum())


def m_step_closed(data, posterior, omega_eps, omega_alpha=None, per_category=False):
    """Closed-form ``(mu, sigma2_eps, sigma2_alpha)`` at fixed correlations.

    Parameters
    ----------
    omega_eps : ndarray
        Block-diagonal within-category correlation (``n x n``).
    omega_alpha : ndarray, optional
        Between-category correlation. A singular matrix is handled through
        its pseudo-inverse and rank.
    per_category : bool
        Return one ``mu`` and ``sigma2_eps`` per category.

    Returns
    -------
    mu_hat, sigma2_eps_hat, sigma2_alpha_hat
        Scalars (arrays of length ``c`` when ``per_category``);
        ``sigma2_alpha_hat`` is None without ``omega_alpha``.
    """
    blocks = data.blocks
    cfs = [cho_factor(omega_eps[sl, sl], lower=True) for sl in blocks]
    resid = [data.w[sl] - posterior.mean[sl] for sl in blocks]
    S_blocks = [posterior.cov[sl, sl] for sl in blocks]
    if per_category:
        mu = np.array([_gls_mean([cf], [rk]) for cf, rk in zip(cfs, resid)])
        s2e = np.array([_sigma2_eps_hat([cf], [rk - m], [Sk])
                        for cf, rk, m, Sk in zip(cfs, resid, mu, S_blocks)])
    else:
        mu = _gls_mean(cfs, resid)
        s2e = _sigma2_eps_hat(cfs, [rk - mu for rk in resid], S_blocks)
    s2a = None
    if omega_alpha is not None:
        N = posterior.cov + np.outer(posterior.mean, posterior.mean)
        inv, rank = _pseudo_factor(omega_alpha)
        s2a = float(np.sum(inv * N) / rank)
    return mu, s2e, s2a


# ---------------------------------------------------------------------------
# profile objectives and their gradients


def _q1_group(Xs, es, Ss, Ds, nu, g, grad=False):
    """Profile ``Q1`` over blocks sharing ``(nu, g)`` with ``mu`` held fixed.

    ``es`` are ``w - mu - E[alpha]`` per block, ``Ss`` the posterior
    covariance blocks, ``Ds`` the per-dimension squared differences.
    Returns the value (and gradient in ``(nu, g)``) with ``sigma2_eps``
    replaced by its maximizer.
    """
    n_tot = 0
    T = 0.0
    logdet = 0.0
    keep = []
    for X, e, S, D in zip(Xs, es, Ss, Ds):
        K = np.exp(-np.tensordot(1.0 / nu, D, axes=1))
        Om = K.copy()
        Om[np.diag_indices_from(Om)] += g
        cf = _chol(Om, "Omega_eps")
        M = np.outer(e, e) + S
        Oi = cho_solve(cf, np.eye(e.size))
        T += np.sum(Oi * M)
        logdet += _logdet(cf)
        n_tot += e.size
        if grad:
            keep.append((K, D, M, Oi))
    s2 = T / n_tot
    val = -0.5 * logdet - 0.5 * n_tot * (np.log(s2) + _LOG2PI + 1.0)
    if not grad:
        return val, s2
    g_nu = np.zeros(nu.size)
    g_g = 0.0
    for K, D, M, Oi in keep:
        G = Oi @ M @ Oi / s2 - Oi
        GK = G * K
        g_nu += 0.5 * np.tensordot(D, GK, axes=([1, 2], [0, 1])) / nu ** 2
        g_g += 0.5 * np.trace(G)
    return val, s2, g_nu, g_g


def _q2_profile(data, thetas, N, Phi, grad=False):
    """Profile ``Q2`` in the angles with ``sigma2_alpha`` at its maximizer."""
    c = data.n_categories
    P, _ = hypersphere_P(thetas, c)
    if Phi is None:
        Nt = _alpha_latent_stats(data, N)
        cf = _chol(P, "P")
        Pi = cho_solve(cf, np.eye(c))
        rank = c
        T = np.sum(Pi * Nt)
        logdet = _logdet(cf) + np.sum(np.log(data.category_sizes))
    else:
        Om = P[np.ix_(data.codes, data.codes)] * Phi
        cf = _chol(Om, "Omega_alpha")
        Oi = cho_solve(cf, np.eye(data.n))
        rank = data.n
        T = np.sum(Oi * N)
        logdet = _logdet(cf)
    s2 = T / rank
    val = -0.5 * logdet - 0.5 * rank * (np.log(s2) + _LOG2PI + 1.0)
    if not grad:
        return val, s2
    dP = hypersphere_P_grad(thetas, c)
    if Phi is None:
        G = Pi @ Nt @ Pi / s2 - Pi
        gt = 0.5 * np.tensordot(dP, G, axes=([1, 2], [0, 1]))
    else:
        G = (Oi @ N @ Oi / s2 - Oi) * Phi
        # sum_ij G_ij dP[k_i, k_j] = sum_kl (A^T G A)_kl dP_kl
        A = np.zeros((data.n, c))
        A[np.arange(data.n), data.codes] = 1.0
        gt = 0.5 * np.tensordot(dP, A.T @ G @ A, axes=([1, 2], [0, 1]))
    return val, s2, gt


def _groups(params):
    c = params.n_categories
    return [[k] for k in range(c)] if params.per_category else [list(range(c))]


def _group_inputs(data, params, posterior, group):
    blocks = data.blocks
    e = data.w - _mu_vec(data, params) - posterior.mean
    Xs = [data.X[blocks[k]] for k in group]
    es = [e[blocks[k]] for k in group]
    Ss = [posterior.cov[blocks[k], blocks[k]] for k in group]
    Ds = [sq_diffs(X) for X in Xs]
    return Xs, es, Ss, Ds


def profile_q1(params, data, posterior):
    """Profile ``Q1`` summed over parameter groups (``mu`` fixed at ``params.mu``)."""
    total = 0.0
    for group in _groups(params):
        k = group[0]
        val, _ = _q1_group(*_group_inputs(data, params, posterior, group),
                           params.nu[k], params.g[k])
        total += val
    return float(total)


def _alpha_phi(data, params):
    return None if np.isinf(params.r_max) else _phi(data.X, params.r_max, params.v)


def profile_q2(params, data, posterior):
    """Profile ``Q2`` at the current angles."""
    N = posterior.cov + np.outer(posterior.mean, posterior.mean)
    val, _ = _q2_profile(data, params.thetas, N, _alpha_phi(data, params))
    return float(val)


def profile_gradients(params, data, posterior):
    """Analytic gradients of the profile objectives.

    Returns
    -------
    dict
        ``"nu"`` of shape ``(groups, p)``, ``"g"`` of shape ``(groups,)``
        for :func:`profile_q1` and ``"thetas"`` for :func:`profile_q2`
        (empty when the model has no between-category field).
    """
    g_nu, g_g = [], []
    for group in _groups(params):
        k = group[0]
        _, _, gn, gg = _q1_group(*_group_inputs(data, params, posterior, group),
                                 params.nu[k], params.g[k], grad=True)
        g_nu.append(gn)
        g_g.append(gg)
    out = {"nu": np.array(g_nu), "g": np.array(g_g), "thetas": np.zeros(0)}
    if params.variant != "gp" and params.n_categories > 1:
        N = posterior.cov + np.outer(posterior.mean, posterior.mean)
        _, _, gt = _q2_profile(data, params.thetas, N, _alpha_phi(data, params), grad=True)
        out["thetas"] = gt
    return out


# ---------------------------------------------------------------------------
# fitting


def initial_params(data, variant, config=None):
    """Neutral starting values.

    ``nu`` is the per-dimension median of positive pairwise squared
    differences, ``g = 1e-3``, all angles ``pi/2`` (``P = I``) and the
    score variance split evenly between ``eps`` and ``alpha``.
    """
    config = config or EMConfig()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    c, p = data.n_categories, data.p
    D = sq_diffs(data.X)
    iu = np.triu_indices(data.n, 1)
    nu0 = np.ones(p)
    for l in range(p):
        dl = D[l][iu]
        dl = dl[dl > 0]
        if dl.size:
            nu0[l] = np.median(dl)
    var = float(np.var(data.w))
    floor = 1e-10 * (1.0 + float(np.mean(data.w ** 2)))
    var = max(var, floor)
    alpha = variant != "gp" and c > 1
    if variant in _PER_CATEGORY:
        mu = np.array([data.w[sl].mean() for sl in data.blocks])
    else:
        mu = np.full(c, data.w.mean())
    g0 = 1e-3 if config.fixed_nugget is None else config.fixed_nugget
    v = config.v if config.v is not None else min_wendland_exponent(p)
    if v < min_wendland_exponent(p):
        raise ValueError(f"kernel exponent v={v} below the positive-definiteness bound "
                         f"{min_wendland_exponent(p)} for p={p}")
    if variant == "cgp":
        r_max = np.inf
    else:
        r_max = config.r_max if config.r_max is not None else default_r_max(data.X)
    return LMGPParams(
        variant=variant,
        mu=mu,
        sigma2_eps=np.full(c, var / 2 if alpha else var),
        nu=np.tile(nu0, (c, 1)),
        g=np.full(c, g0),
        sigma2_alpha=var / 2 if alpha else 0.0,
        thetas=np.full(n_angles(c), np.pi / 2),
        r_max=r_max,
        v=v,
    )


_BIG = 1e100


def _update_eps(data, params, posterior, config):
    """Conditional maximization of ``Q1`` for each parameter group."""
    blocks = data.blocks
    fix_g = config.fixed_nugget is not None
    resid = data.w - posterior.mean
    for group in _groups(params):
        k0 = group[0]
        Xs = [data.X[blocks[k]] for k in group]
        Ds = [sq_diffs(X) for X in Xs]
        Ss = [posterior.cov[blocks[k], blocks[k]] for k in group]
        rs = [resid[blocks[k]] for k in group]

        def omega_cfs(nu, g):
            out = []
            for D in Ds:
                Om = np.exp(-np.tensordot(1.0 / nu, D, axes=1))
                Om[np.diag_indices_from(Om)] += g
                out.append(_chol(Om, "Omega_eps"))
            return out

        nu, g = params.nu[k0].copy(), float(params.g[k0])
        mu = _gls_mean(omega_cfs(nu, g), rs)

        es = [r - mu for r in rs]
        scale = nu.copy()

        def unpack(x):
            nu_ = np.exp(x[:nu.size]) * scale
            g_ = g if fix_g else float(np.exp(x[nu.size]))
            return nu_, g_

        def objective(x):
            nu_, g_ = unpack(x)
            try:
                val, _, gn, gg = _q1_group(Xs, es, Ss, Ds, nu_, g_, grad=True)
            except CovarianceError:
                return _BIG, np.zeros_like(x)
            jac = gn * nu_
            if not fix_g:
                jac = np.append(jac, gg * g_)
            if not np.isfinite(val):
                return _BIG, np.zeros_like(x)
            return -val, -jac

        x0 = np.zeros(nu.size)
        bounds = [(np.log(1e-4), np.log(1e4))] * nu.size
        if not fix_g:
            x0 = np.append(x0, np.log(max(g, 1e-8)))
            bounds.append((np.log(1e-8), np.log(10.0)))
        f0, _ = objective(x0)
        if config.inner_maxiter > 0:
            res = minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"maxiter": config.inner_maxiter})
            if res.fun <= f0:
                nu, g = unpack(res.x)

        cfs = omega_cfs(nu, g)
        mu = _gls_mean(cfs, rs)
        s2 = _sigma2_eps_hat(cfs, [r - mu for r in rs], Ss)
        s2 = max(s2, 1e-300)
        for k in group:
            params.nu[k] = nu
            params.g[k] = g
            params.mu[k] = mu
            params.sigma2_eps[k] = s2


def _update_alpha(data, params, posterior, config):
    """Conditional maximization of ``Q2`` over the angles, then ``sigma2_alpha``."""
    c = data.n_categories
    N = posterior.cov + np.outer(posterior.mean, posterior.mean)
    Phi = _alpha_phi(data, params)
    thetas = params.thetas.copy()
    if c > 1 and config.inner_maxiter > 0:
        def to_theta(t):
            return np.pi * expit(t)

        def objective(t):
            th = to_theta(t)
            try:
                val, _, gt = _q2_profile(data, th, N, Phi, grad=True)
            except CovarianceError:
                return _BIG, np.zeros_like(t)
            if not np.isfinite(val):
                return _BIG, np.zeros_like(t)
            s = expit(t)
            return -val, -gt * np.pi * s * (1 - s)

        t0 = np.log(thetas / (np.pi - thetas))
        f0, _ = objective(t0)
        res = minimize(objective, t0, jac=True, method="L-BFGS-B",
                       bounds=[(-8.0, 8.0)] * t0.size,
                       options={"maxiter": config.inner_maxiter})
        if res.fun <= f0:
            thetas = to_theta(res.x)
    if c > 1:
        _, s2 = _q2_profile(data, thetas, N, Phi)
    else:
        Om = _omega_alpha(data, replace(params, thetas=thetas))
        inv, rank = _pseudo_factor(Om)
        s2 = np.sum(inv * N) / rank
    params.thetas = thetas
    params.sigma2_alpha = float(max(s2, 0.0))


def m_step(data, params, posterior, config=None):
    """One full M-step; returns updated parameters (input untouched)."""
    config = config or EMConfig()
    new = params.copy()
    _update_eps(data, new, posterior, config)
    if new.has_alpha:
        _update_alpha(data, new, posterior, config)
    return new


def fit_em(data, variant="lmgp", config=None):
    """Fit one component model by EM.

    Three traces are stored on the result: ``trace`` holds ``Q1 + Q2``
    evaluated with the posterior computed from the same parameters,
    ``loglik_trace`` the observed-data log-likelihood and ``ascent`` the
    gain of every M-step in ``Q1 + Q2`` at fixed posterior (never
    negative). Only the last is an ascent guarantee: ``Q(theta|theta)``
    is the log-likelihood minus the posterior entropy and may dip when
    the posterior widens. Iteration stops when the relative change of the
    log-likelihood falls below ``config.tol``; hitting ``max_iter`` sets
    ``converged=False``.
    """
    config = config or EMConfig()
    if data.n < 2:
        raise ValueError("need at least two observations")
    if config.starts is not None:
        params = config.starts.copy()
        if params.variant != variant:
            raise ValueError("starting parameters belong to a different variant")
    else:
        params = initial_params(data, variant, config)
    if variant != "gp" and data.n_categories == 1:
        # a single category leaves alpha unidentifiable; this is the plain GP
        params.sigma2_alpha = 0.0
    params.trace, params.loglik_trace, params.ascent = [], [], []
    converged = False
    prev = None
    it = 0
    for it in range(1, config.max_iter + 1):
        post = e_step(data, params)
        params.trace.append(q1(params, data, post) + q2(params, data, post))
        params.loglik_trace.append(post.loglik)
        if prev is not None and abs(post.loglik - prev) <= config.tol * (abs(prev) + 1e-12):
            converged = True
            break
        prev = post.loglik
        new = m_step(data, params, post, config)
        new.ascent.append(q1(new, data, post) + q2(new, data, post) - params.trace[-1])
        params = new
    params.converged = converged
    params.n_iter = it
    if not converged:
        logger.info("EM for variant %s stopped at max_iter=%d", variant, config.max_iter)
    return params


def fit_em_per_category(data, config=None):
    """LMGP-S fit: per-category ``eps`` parameters, shared ``alpha`` field."""
    sizes = data.category_sizes
    for k, nk in enumerate(sizes):
        if nk < 2:
            raise ValueError(f"category {k} has {nk} observation(s); LMGP-S needs at least 2")
    return fit_em(data, "lmgp-s", config)


# ---------------------------------------------------------------------------
# prediction


def training_weights(data, params):
    """``Sigma_11^-1 (w - mu)``, reusable across prediction points."""
    S = sigma_eps(data, params) + sigma_alpha(data, params)
    cf = _chol(S, "covariance")
    return cho_solve(cf, data.w - _mu_vec(data, params))


def cross_covariance(x0, k0, data, params):
    """Covariances between new points ``(x0, k0)`` and the training rows."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    k0 = np.broadcast_to(np.asarray(k0, dtype=int), (x0.shape[0],))
    out = np.zeros((x0.shape[0], data.n))
    for i, (x, k) in enumerate(zip(x0, k0)):
        sl = data.blocks[k]
        out[i, sl] = params.sigma2_eps[k] * gauss_kernel(x[None, :], data.X[sl], params.nu[k])[0]
        if params.has_alpha:
            c = data.n_categories
            P = hypersphere_P(params.thetas, c)[0] if c > 1 else np.ones((1, 1))
            r = np.sqrt(np.sum((data.X - x) ** 2, axis=1))
            out[i] += params.sigma2_alpha * P[k, data.codes] * wendland(r, params.r_max, params.v)
    return out


def predict_w(x0, z0, data, params, weights=None):
    """Conditional mean ``mu + Sigma_01 Sigma_11^-1 (w - mu)`` at new inputs.

    ``x0`` is one point (length ``p``) or an ``(n0, p)`` array, ``z0`` the
    matching category code(s). Returns a float for a single point.
    """
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim <= 1
    x0 = np.atleast_2d(x0)
    if x0.shape[1] != data.p:
        raise ValueError(f"expected {data.p} numeric inputs, got {x0.shape[1]}")
    k0 = np.broadcast_to(np.asarray(z0), (x0.shape[0],))
    if not np.issubdtype(k0.dtype, np.integer) or np.any(k0 < 0) or np.any(k0 >= data.n_categories):
        raise ValueError("category not in training set")
    if weights is None:
        weights = training_weights(data, params)
    pred = params.mu[k0] + cross_covariance(x0, k0, data, params) @ weights
    return float(pred[0]) if single else pred
