"""Gaussian-mixture priors and their exact MMSE denoiser.

For a prior ``p_x = sum_i w_i N(mu_i, C_i)`` and the AWGN model
``z = x + n``, ``n ~ N(0, sigma^2 I)``, the noisy marginal is again a
mixture with covariances ``S_i = C_i + sigma^2 I``. Everything here is
closed form apart from :func:`denoiser_inverse` (damped Newton).

All point-wise functions accept a single vector ``(d,)`` or a batch of
row vectors ``(N, d)`` and return matching shapes. The implicit
regularizer ``h_mmse`` is

    h_mmse(x) = ( -||x - z||^2 / 2 + sigma^2 h_sigma(z) ) / gamma,   z = D^{-1}(x)

and ``+inf`` where ``x`` has no preimage under the denoiser. Its
proximal map at step ``gamma`` is the MMSE denoiser itself, for every
``gamma > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from pnpkit.core import make_rng

EPS_PD = 1e-10
_LOG2PI = np.log(2 * np.pi)


class DenoiserInverseError(ValueError):
    """Raised when a point is not (numerically) in the denoiser's image."""


def _as_cov(cov, d: int) -> np.ndarray:
    c = np.asarray(cov, dtype=np.float64)
    if c.ndim == 0:
        return float(c) * np.eye(d)
    if c.ndim == 1:
        if c.shape != (d,):
            raise ValueError(f"diagonal covariance must have length {d}")
        return np.diag(c)
    if c.shape != (d, d):
        raise ValueError(f"covariance must be {d}x{d}, got {c.shape}")
    return c


@dataclass(frozen=True)
class GmmPrior:
    """Mixture weights ``(K,)``, means ``(K, d)`` and covariances ``(K, d, d)``.

    Each covariance may be given as a scalar (isotropic), a length-``d``
    vector (diagonal) or a full symmetric matrix. Every covariance must be
    positive definite, which keeps the prior non-degenerate.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        mu = np.asarray(self.means, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu[:, None]
        if mu.ndim != 2 or mu.shape[0] != w.shape[0]:
            raise ValueError("means must have shape (K, d) matching weights (K,)")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        d = mu.shape[1]
        covs = self.covariances
        if isinstance(covs, np.ndarray) and covs.ndim == 3:
            cov = covs.astype(np.float64)
        else:
            cov = np.stack([_as_cov(c, d) for c in covs])
        if cov.shape != (w.shape[0], d, d):
            raise ValueError(f"covariances must have shape {(w.shape[0], d, d)}")
        if not np.allclose(cov, cov.transpose(0, 2, 1), rtol=0, atol=1e-12):
            raise ValueError("covariances must be symmetric")
        eig = np.linalg.eigvalsh(cov)
        if eig.min() < EPS_PD:
            raise ValueError(
                f"covariance not positive definite (min eigenvalue {eig.min():.3g} < {EPS_PD})"
            )
        for name, arr in (("weights", w), ("means", mu), ("covariances", cov)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def isotropic(cls, weights, means, variances) -> "GmmPrior":
        return cls(weights, means, [float(v) for v in np.atleast_1d(variances)])

    def noisy(self, sigma: float) -> "_Noisy":
        """Precomputed marginal quantities of ``z = x + n`` at noise level ``sigma``."""
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        key = float(sigma)
        if key not in self._cache:
            self._cache[key] = _Noisy(self, key)
        return self._cache[key]


class _Noisy:
    def __init__(self, prior: GmmPrior, sigma: float):
        d = prior.dim
        S = prior.covariances + sigma**2 * np.eye(d)
        chol = np.linalg.cholesky(S)
        self.sigma = sigma
        self.log_w = np.log(prior.weights)
        self.means = prior.means
        self.S_inv = np.linalg.inv(S)
        self.S_inv = 0.5 * (self.S_inv + self.S_inv.transpose(0, 2, 1))
        self.logdet = 2 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        # Posterior-mean gain of each component: C_i S_i^{-1}
        self.gain = prior.covariances @ self.S_inv
        self.d = d

    def stats(self, Z: np.ndarray):
        """Return (log p_z, responsibilities, S_i^{-1}(z - mu_i)) for rows of Z."""
        diff = Z[:, None, :] - self.means[None, :, :]
        white = np.einsum("kij,nkj->nki", self.S_inv, diff)
        quad = np.einsum("nki,nki->nk", diff, white)
        log_comp = self.log_w - 0.5 * (self.d * _LOG2PI + self.logdet + quad)
        log_p = logsumexp(log_comp, axis=1)
        resp = np.exp(log_comp - log_p[:, None])
        return log_p, resp, diff, white

    def denoise(self, Z):
        _, resp, diff, _ = self.stats(Z)
        comp_mean = self.means[None] + np.einsum("kij,nkj->nki", self.gain, diff)
        return np.einsum("nk,nki->ni", resp, comp_mean)

    def denoise_and_jacobian(self, Z):
        _, resp, diff, white = self.stats(Z)
        comp_mean = self.means[None] + np.einsum("kij,nkj->nki", self.gain, diff)
        D = np.einsum("nk,nki->ni", resp, comp_mean)
        # d resp_k / dz = resp_k (g_k - gbar), g_k = -S_k^{-1}(z - mu_k)
        g = -white
        gbar = np.einsum("nk,nki->ni", resp, g)
        J = np.einsum("nk,kij->nij", resp, self.gain)
        J += np.einsum("nk,nki,nkj->nij", resp, comp_mean - D[:, None], g - gbar[:, None])
        return D, J


def _rows(z, d: int):
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim <= 1
    Z = z.reshape(1, -1) if single else z
    if Z.ndim != 2 or Z.shape[1] != d:
        raise ValueError(f"expected vectors of dimension {d}, got shape {z.shape}")
    return Z, single


def gmm_h_sigma(prior: GmmPrior, z, sigma: float):
    """``-log p_z(z)`` of the noisy marginal (log-sum-exp stabilised)."""
    Z, single = _rows(z, prior.dim)
    log_p, *_ = prior.noisy(sigma).stats(Z)
    out = -log_p
    return float(out[0]) if single else out


def gmm_h_sigma_grad(prior: GmmPrior, z, sigma: float):
    """Analytic gradient of :func:`gmm_h_sigma`: ``sum_i r_i S_i^{-1}(z - mu_i)``."""
    Z, single = _rows(z, prior.dim)
    _, resp, _, white = prior.noisy(sigma).stats(Z)
    out = np.einsum("nk,nki->ni", resp, white)
    return out[0] if single else out


def mmse_denoise(prior: GmmPrior, z, sigma: float):
    """Posterior mean ``E[x | z]`` under the mixture prior."""
    Z, single = _rows(z, prior.dim)
    out = prior.noisy(sigma).denoise(Z)
    return out[0] if single else out


def mmse_jacobian(prior: GmmPrior, z, sigma: float):
    """Exact Jacobian ``dD/dz``; ``(d, d)`` for one point, ``(N, d, d)`` for a batch."""
    Z, single = _rows(z, prior.dim)
    _, J = prior.noisy(sigma).denoise_and_jacobian(Z)
    return J[0] if single else J


def score_identity_gap(prior: GmmPrior, z, sigma: float) -> float:
    """``||D(z) - (z - sigma^2 grad h_sigma(z))||`` (Tweedie); max over a batch."""
    Z, _ = _rows(z, prior.dim)
    lhs = mmse_denoise(prior, Z, sigma)
    rhs = Z - sigma**2 * gmm_h_sigma_grad(prior, Z, sigma)
    return float(np.max(np.linalg.norm(lhs - rhs, axis=1)))


def _invert(prior: GmmPrior, X: np.ndarray, sigma: float, max_iter: int, tol: float,
            max_step: Optional[float]):
    """Batched damped Newton for D(z) = x. Returns (z, residual norms)."""
    noisy = prior.noisy(sigma)
    d = prior.dim
    if max_step is None:
        max_step = 10.0 * sigma * np.sqrt(d)
    Z = X.copy()
    R = noisy.denoise(Z) - X
    res = np.linalg.norm(R, axis=1)
    floor = 1e-15 * (1.0 + np.linalg.norm(X, axis=1))
    active = np.ones(len(X), dtype=bool)
    for _ in range(max_iter):
        active &= res > floor
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        _, J = noisy.denoise_and_jacobian(Z[idx])
        step = -np.linalg.solve(J, R[idx][:, :, None])[:, :, 0]
        norm = np.linalg.norm(step, axis=1)
        scale = np.minimum(1.0, max_step / np.maximum(norm, 1e-300))
        step *= scale[:, None]
        f0 = res[idx] ** 2
        t = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(40):
            p = np.flatnonzero(pending)
            if p.size == 0:
                break
            trial = Z[idx[p]] + t[p, None] * step[p]
            r_trial = noisy.denoise(trial) - X[idx[p]]
            f_trial = np.einsum("ni,ni->n", r_trial, r_trial)
            ok = f_trial <= f0[p] * (1.0 - 2e-4 * t[p] * scale[p])
            acc = p[ok]
            Z[idx[acc]] = trial[ok]
            R[idx[acc]] = r_trial[ok]
            res[idx[acc]] = np.sqrt(f_trial[ok])
            pending[acc] = False
            t[p[~ok]] *= 0.5
        # rows whose line search failed have stalled
        active[idx[pending]] = False
    return Z, res


def denoiser_inverse(prior: GmmPrior, x, sigma: float, *, max_iter: int = 100,
                     tol: float = 1e-10, max_step: Optional[float] = None):
    """Solve ``D_sigma(z) = x`` by damped Newton started at ``z = x``.

    Each Newton step is capped at ``max_step`` (default ``10 sigma sqrt(d)``)
    and accepted under Armijo backtracking on ``||D(z) - x||^2``. A point
    whose preimage cannot be reached within ``max_iter`` steps to residual
    ``tol`` is treated as outside the denoiser's image.
    """
    X, single = _rows(x, prior.dim)
    Z, res = _invert(prior, X, sigma, max_iter, tol, max_step)
    bad = ~(res <= tol)
    if bad.any():
        raise DenoiserInverseError(
            f"x not in denoiser image ({bad.sum()} of {len(X)} points, "
            f"worst residual {np.nanmax(res):.3g})"
        )
    return Z[0] if single else Z


def _hmmse_parts(prior, X, sigma, gamma):
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    Z, res = _invert(prior, X, sigma, 100, 1e-10, None)
    ok = res <= 1e-10
    return Z, ok


def hmmse_eval(prior: GmmPrior, x, sigma: float, gamma: float):
    """Implicit regularizer ``h_mmse(x)``; ``inf`` outside the denoiser image."""
    X, single = _rows(x, prior.dim)
    Z, ok = _hmmse_parts(prior, X, sigma, gamma)
    out = np.full(len(X), np.inf)
    if ok.any():
        diff = X[ok] - Z[ok]
        h_sig = gmm_h_sigma(prior, Z[ok], sigma)
        out[ok] = (-0.5 * np.einsum("ni,ni->n", diff, diff) + sigma**2 * h_sig) / gamma
    return float(out[0]) if single else out


def hmmse_grad(prior: GmmPrior, x, sigma: float, gamma: float):
    """``grad h_mmse(x) = (D^{-1}(x) - x) / gamma``; raises outside the image."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    X, single = _rows(x, prior.dim)
    Z = denoiser_inverse(prior, X, sigma)
    out = (Z - X) / gamma
    return out[0] if single else out


def hmmse_hessian_fd(prior: GmmPrior, X, sigma: float, gamma: float, step: float = 1e-5):
    """Central-difference Hessians of ``h_mmse`` at rows of X.

    Returns ``(H, ok)`` where ``H`` is ``(N, d, d)`` (symmetrised) and
    ``ok`` marks rows whose every stencil point inverted successfully.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    E = step * np.eye(d)
    stencil = np.concatenate([X[:, None, :] + E[None], X[:, None, :] - E[None]], axis=1)
    flat = stencil.reshape(-1, d)
    Z, res = _invert(prior, flat, sigma, 100, 1e-10, None)
    G = ((Z - flat) / gamma).reshape(n, 2 * d, d)
    ok = (res <= 1e-10).reshape(n, 2 * d).all(axis=1)
    H = (G[:, :d, :] - G[:, d:, :]) / (2 * step)  # H[n, j, :] = d grad / d x_j
    H = 0.5 * (H + H.transpose(0, 2, 1))
    return H, ok


def estimate_lipschitz_M(prior: GmmPrior, sigma: float, gamma: float, sample_box,
                         n_samples: int, seed: int, safety: float = 1.1) -> float:
    """Sampled Lipschitz constant of ``grad h_mmse`` over a box, times ``safety``.

    ``sample_box = (lo, hi)`` with scalars or length-``d`` arrays. Points are
    drawn uniformly from a Philox stream, so the first ``n`` samples are
    shared by every call with ``n_samples >= n``. Samples outside the
    denoiser image are skipped.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    d = prior.dim
    lo = np.broadcast_to(np.asarray(sample_box[0], dtype=np.float64), (d,))
    hi = np.broadcast_to(np.asarray(sample_box[1], dtype=np.float64), (d,))
    if np.any(hi < lo):
        raise ValueError("sample_box upper bound below lower bound")
    U = make_rng(seed).random((n_samples, d))
    X = lo + U * (hi - lo)
    norms = []
    for chunk in np.array_split(X, max(1, n_samples // 256)):
        H, ok = hmmse_hessian_fd(prior, chunk, sigma, gamma)
        if ok.any():
            norms.append(np.linalg.norm(H[ok], ord=2, axis=(1, 2)))
    if not norms:
        raise ValueError("no sample point lies in the denoiser image")
    return safety * float(np.max(np.concatenate(norms)))


@dataclass(frozen=True)
class DenoiserHandle:
    """A denoiser ``denoise(v, sigma) -> same-shape array``.

    ``prior`` is set for exact GMM-MMSE denoisers; it acts on ``v`` reshaped
    to rows of length ``prior.dim`` (``dim == v.size`` for a joint prior,
    ``dim == 1`` for an i.i.d. per-pixel prior).
    """

    denoise: Callable[[np.ndarray, float], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    is_exact_mmse: bool = False
    prior: Optional[GmmPrior] = None
    name: str = "denoiser"

    def __call__(self, v, sigma):
        return self.denoise(v, sigma)


def gmm_denoiser(prior: GmmPrior, name: str = "gmm_mmse") -> DenoiserHandle:
    d = prior.dim

    def denoise(v, sigma):
        v = np.asarray(v, dtype=np.float64)
        return mmse_denoise(prior, v.reshape(-1, d), sigma).reshape(v.shape)

    def jacobian(v, sigma):
        v = np.asarray(v, dtype=np.float64)
        if v.size != d:
            raise ValueError("jacobian is only available for a single joint vector")
        return mmse_jacobian(prior, v.reshape(d), sigma)

    return DenoiserHandle(denoise, jacobian, is_exact_mmse=True, prior=prior, name=name)


def identity_denoiser() -> DenoiserHandle:
    return DenoiserHandle(
        lambda v, sigma: np.array(v, dtype=np.float64),
        lambda v, sigma: np.eye(np.size(v)),
        name="identity",
    )
