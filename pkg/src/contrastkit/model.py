"""Probabilistic contrastive models: PCPCA (closed form) and CLVM (EM)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_features,
    check_matrix,
    check_n_components,
    check_pair,
    check_random_state_seed,
)
from .core import Embedding, center_columns, covariance, scatter, sym_eigh
from .exceptions import DegenerateSpectrum, InvalidArgument, InvalidGamma

LOG_2PI = math.log(2.0 * math.pi)


def gaussian_loglik_from_scatter(Sigma: np.ndarray, scatter_: np.ndarray, n: int) -> float:
    """Sum of ``log N(x_i | 0, Sigma)`` given ``sum_i x_i x_i^T`` and ``n``."""
    if n == 0:
        return 0.0
    L = np.linalg.cholesky(Sigma)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    Linv_S = np.linalg.solve(L, scatter_)
    quad = np.trace(np.linalg.solve(L, Linv_S.T))
    p = Sigma.shape[0]
    return float(-0.5 * (n * (p * LOG_2PI + logdet) + quad))


# --------------------------------------------------------------------------- PCPCA


class PCPCA(TransformerMixin, BaseEstimator):
    """Probabilistic contrastive PCA.

    Maximises ``sum_x log p(x) - gamma * sum_y log p(y)`` under the PPCA
    model ``N(0, W W^T + sigma2 I)``. With ``C = X^T X - gamma Y^T Y`` (centred
    scatter matrices) and ``m = n_x - gamma n_y`` the maximiser is::

        sigma2 = sum_{j>d} lambda_j / (m (p - d))
        W      = V_d (Lambda_d / m - sigma2 I)^{1/2}

    Attributes
    ----------
    W_ : ndarray of shape (n_features, n_components)
    sigma2_ : float
    loadings_ : ndarray of shape (n_features, n_components)
        Orthonormal eigenvectors ``V_d`` (``span(W_) == span(loadings_)``).
    eigenvalues_ : ndarray of shape (n_features,)
        Descending spectrum of ``C``.
    """

    def __init__(self, n_components=2, gamma=1.0):
        self.n_components = n_components
        self.gamma = gamma

    def fit(self, X, Y):
        X, Y = check_pair(X, Y)
        Xc, self.mean_ = center_columns(X)
        Yc, self.background_mean_ = center_columns(Y)
        fit = _pcpca_closed_form(scatter(Xc), X.shape[0], scatter(Yc), Y.shape[0],
                                 self.gamma, self.n_components)
        self.W_, self.sigma2_, self.loadings_, self.eigenvalues_ = fit
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Posterior mean ``E[z | x]`` of the latent coordinates."""
        check_is_fitted(self, "W_")
        X = check_features(X, self.n_features_in_)
        return posterior_mean(self.W_, self.sigma2_, X - self.mean_)

    @property
    def components_(self):
        check_is_fitted(self, "W_")
        return self.loadings_.T


def _check_pcpca_args(gamma, n_x, n_y, d, p):
    gamma = float(gamma)
    if np.isnan(gamma) or gamma < 0:
        raise InvalidGamma(f"gamma must be >= 0, got {gamma!r}")
    d = check_n_components(d, p, strict=True)
    m = n_x - gamma * n_y
    if m <= 0:
        raise InvalidGamma(
            f"n_x - gamma * n_y = {m:.6g} <= 0; the contrastive likelihood has no maximiser"
        )
    return gamma, d, m


def _pcpca_from_spectrum(lam, V, m, d):
    p = lam.shape[0]
    sigma2 = float(lam[d:].sum() / (m * (p - d)))
    if not sigma2 > 0:
        j = d + int(np.argmin(lam[d:]))
        raise DegenerateSpectrum(
            f"noise variance estimate {sigma2:.6g} is not positive; the discarded "
            f"contrastive eigenvalues sum to a non-positive value (most negative: component {j})",
            component=j,
        )
    signal = lam[:d] / m - sigma2
    bad = np.flatnonzero(signal < 0)
    if bad.size:
        j = int(bad[0])
        raise DegenerateSpectrum(
            f"component {j}: lambda_{j}/m - sigma2 = {signal[j]:.6g} < 0", component=j
        )
    return V[:, :d] * np.sqrt(signal), sigma2


def _pcpca_closed_form(SX, n_x, SY, n_y, gamma, d):
    gamma, d, m = _check_pcpca_args(gamma, n_x, n_y, d, SX.shape[0])
    pairs = sym_eigh(SX - gamma * SY)
    W, sigma2 = _pcpca_from_spectrum(pairs.eigenvalues, pairs.eigenvectors, m, d)
    return W, sigma2, pairs.eigenvectors[:, :d], pairs.eigenvalues


def pcpca_fit(X, Y, gamma: float, d: int) -> PCPCA:
    return PCPCA(n_components=d, gamma=gamma).fit(X, Y)


def pcpca_from_spectrum(eigenvalues, eigenvectors, n_x, n_y, gamma, d):
    """Closed-form ``(W, sigma2)`` from a spectrum of ``X'X - gamma Y'Y`` (descending)."""
    lam = np.asarray(eigenvalues, dtype=float)
    V = np.asarray(eigenvectors, dtype=float)
    _, d, m = _check_pcpca_args(gamma, n_x, n_y, d, lam.shape[0])
    return _pcpca_from_spectrum(lam, V, m, d)


def pcpca_contrastive_loglik(X, Y, W, sigma2: float, gamma: float) -> float:
    """``sum_x log N(x|0, WW'+s2 I) - gamma * sum_y log N(y|0, WW'+s2 I)``.

    ``X`` and ``Y`` are used as given (already centred); ``Y`` may be empty.
    """
    if not sigma2 > 0:
        raise InvalidArgument("sigma2 must be positive")
    X = check_matrix(X, "X", min_samples=0)
    p = X.shape[1]
    Y = np.asarray(Y, dtype=float).reshape(-1, p)
    W = np.asarray(W, dtype=float).reshape(p, -1)
    Sigma = W @ W.T + sigma2 * np.eye(p)
    ll = gaussian_loglik_from_scatter(Sigma, X.T @ X, X.shape[0])
    if gamma != 0 and Y.shape[0]:
        ll -= gamma * gaussian_loglik_from_scatter(Sigma, Y.T @ Y, Y.shape[0])
    return ll


# --------------------------------------------------------------------------- posteriors


def posterior_mean(L: np.ndarray, sigma2: float, Xc: np.ndarray) -> np.ndarray:
    """Rows of ``E[u | x] = (L'L + s2 I)^{-1} L' x`` for ``x = L u + noise``."""
    q = L.shape[1]
    M = L.T @ L + sigma2 * np.eye(q)
    return np.linalg.solve(M, L.T @ Xc.T).T


# --------------------------------------------------------------------------- shared/salient EM


@dataclass
class _EMState:
    S: np.ndarray
    W: np.ndarray
    sigma2: float
    beta: np.ndarray | None = None
    tau2: float | None = None


def _foreground_blocks(st: _EMState, p: int):
    """Loading matrix and noise diagonal of the (possibly response-augmented) foreground."""
    L = np.hstack([st.S, st.W])
    noise = np.full(p, st.sigma2)
    if st.beta is not None:
        k = st.S.shape[1]
        row = np.concatenate([np.zeros(k), st.beta])[None, :]
        L = np.vstack([L, row])
        noise = np.append(noise, st.tau2)
    return L, noise


def _joint_loglik(st: _EMState, So, n_x, Sy, n_y, p) -> float:
    L, noise = _foreground_blocks(st, p)
    ll = gaussian_loglik_from_scatter(L @ L.T + np.diag(noise), So, n_x)
    if n_y:
        ll += gaussian_loglik_from_scatter(st.S @ st.S.T + st.sigma2 * np.eye(p), Sy, n_y)
    return ll


def _em_step(st: _EMState, So, n_x, Sy, n_y, p) -> _EMState:
    k = st.S.shape[1]
    d = st.W.shape[1]
    q = k + d

    # E-step, foreground: u = (z, t) given o = (x[, r])
    L, noise = _foreground_blocks(st, p)
    Lw = L / noise[:, None]
    cov_u = np.linalg.inv(np.eye(q) + L.T @ Lw)
    cov_u = 0.5 * (cov_u + cov_u.T)
    G = cov_u @ Lw.T
    Bo = So @ G.T                       # sum_i o_i E[u_i]^T
    Ax = n_x * cov_u + G @ So @ G.T     # sum_i E[u_i u_i^T]

    # E-step, background: z given y
    Az = np.zeros((k, k))
    By = np.zeros((p, k))
    if k and n_y:
        Sw = st.S / st.sigma2
        cov_z = np.linalg.inv(np.eye(k) + st.S.T @ Sw)
        cov_z = 0.5 * (cov_z + cov_z.T)
        Gz = cov_z @ Sw.T
        By = Sy @ Gz.T
        Az = n_y * cov_z + Gz @ Sy @ Gz.T

    # M-step: [S W] solve shared normal equations
    A = Ax.copy()
    A[:k, :k] += Az
    B = Bo[:p].copy()
    B[:, :k] += By
    Lnew = np.linalg.solve(A, B.T).T
    S, W = Lnew[:, :k], Lnew[:, k:]

    resid = np.trace(So[:p, :p]) - 2.0 * np.sum(Lnew * Bo[:p]) + np.sum((Lnew.T @ Lnew) * Ax)
    if n_y:
        resid += np.trace(Sy)
        if k:
            resid += -2.0 * np.sum(S * By) + np.sum((S.T @ S) * Az)
    sigma2 = float(resid / (p * (n_x + n_y)))

    beta = tau2 = None
    if st.beta is not None:
        Att = Ax[k:, k:]
        rt = Bo[p, k:]
        beta = np.linalg.solve(Att, rt)
        tau2 = float((So[p, p] - 2.0 * beta @ rt + beta @ Att @ beta) / n_x)
    return _EMState(S, W, sigma2, beta, tau2)


def _run_em(st, So, n_x, Sy, n_y, p, tol, max_iter):
    trace = [_joint_loglik(st, So, n_x, Sy, n_y, p)]
    converged = False
    for _ in range(max_iter):
        st = _em_step(st, So, n_x, Sy, n_y, p)
        if not (st.sigma2 > 0 and (st.tau2 is None or st.tau2 > 0)):
            break
        ll = _joint_loglik(st, So, n_x, Sy, n_y, p)
        gain = ll - trace[-1]
        trace.append(ll)
        if gain <= tol * abs(trace[-2]):
            converged = True
            break
    return st, np.asarray(trace), converged


def _initial_state(Xc, Yc, k, d, seed) -> _EMState:
    p = Xc.shape[1]
    rng = np.random.Generator(np.random.Philox(seed))
    pooled = np.vstack([Xc, Yc])
    scale = math.sqrt(max(np.trace(covariance(pooled)) / p, 1e-300))
    pairs = sym_eigh(covariance(pooled))
    U = pairs.eigenvectors[:, :k]
    S = U * np.sqrt(np.maximum(pairs.eigenvalues[:k], 0.0))
    Xr = Xc - (Xc @ U) @ U.T
    rpairs = sym_eigh(covariance(Xr))
    W = rpairs.eigenvectors[:, :d] * np.sqrt(np.maximum(rpairs.eigenvalues[:d], 0.0))
    free = p - k - d
    rest = rpairs.eigenvalues[d:].sum()
    sigma2 = rest / free if free > 0 else 0.0
    sigma2 = max(sigma2, 1e-6 * scale**2)
    S = S + 1e-3 * scale * rng.standard_normal(S.shape)
    W = W + 1e-3 * scale * rng.standard_normal(W.shape)
    return _EMState(S, W, float(sigma2))


# --------------------------------------------------------------------------- CLVM


class CLVM(TransformerMixin, BaseEstimator):
    """Contrastive latent variable model fitted by EM.

    ``x = S z + W t + mu_x + e`` and ``y = S z + mu_y + e`` with standard
    normal latents and isotropic noise. ``transform`` returns ``E[t | x]``,
    the foreground-specific coordinates.

    Parameters
    ----------
    n_components : int
        Salient dimension ``d``.
    n_shared : int
        Shared dimension ``k`` (may be 0).
    tol : float
        Stop once the relative log-likelihood gain drops below ``tol``.
    max_iter : int
    random_state : int
        Seeds the symmetry-breaking jitter of the spectral initialisation.
    """

    def __init__(self, n_components=2, n_shared=2, tol=1e-8, max_iter=1000, random_state=0):
        self.n_components = n_components
        self.n_shared = n_shared
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, Y):
        X, Y = check_pair(X, Y)
        p = X.shape[1]
        d = check_n_components(self.n_components, p)
        k = int(self.n_shared)
        if k < 0 or k + d > p:
            raise InvalidArgument(f"need 0 <= n_shared and n_shared + n_components <= {p}")
        seed = check_random_state_seed(self.random_state)
        Xc, self.mean_ = center_columns(X)
        Yc, self.background_mean_ = center_columns(Y)
        st = _initial_state(Xc, Yc, k, d, seed)
        st, trace, converged = _run_em(
            st, scatter(Xc), X.shape[0], scatter(Yc), Y.shape[0], p, self.tol, int(self.max_iter)
        )
        self.shared_loadings_ = st.S
        self.salient_loadings_ = st.W
        self.sigma2_ = st.sigma2
        self.loglik_trace_ = trace
        self.converged_ = converged
        self.n_iter_ = len(trace) - 1
        self.n_features_in_ = p
        return self

    def transform(self, X):
        check_is_fitted(self, "salient_loadings_")
        X = check_features(X, self.n_features_in_)
        return self._salient_posterior(X - self.mean_)

    def _salient_posterior(self, Xc):
        L = np.hstack([self.shared_loadings_, self.salient_loadings_])
        k = self.shared_loadings_.shape[1]
        return posterior_mean(L, self.sigma2_, Xc)[:, k:]

    def foreground_covariance(self) -> np.ndarray:
        S, W = self.shared_loadings_, self.salient_loadings_
        return S @ S.T + W @ W.T + self.sigma2_ * np.eye(S.shape[0])

    def background_covariance(self) -> np.ndarray:
        S = self.shared_loadings_
        return S @ S.T + self.sigma2_ * np.eye(S.shape[0])


def clvm_fit_em(X, Y, k: int, d: int, tol: float = 1e-8, max_iter: int = 1000, seed: int = 0) -> CLVM:
    return CLVM(n_components=d, n_shared=k, tol=tol, max_iter=max_iter, random_state=seed).fit(X, Y)


def clvm_transform(model: CLVM, X) -> Embedding:
    """``E[t | x]`` for rows already centred with the training foreground mean."""
    check_is_fitted(model, "salient_loadings_")
    X = check_features(X, model.n_features_in_)
    return Embedding(
        model._salient_posterior(X),
        "clvm",
        {"n_components": int(model.n_components), "n_shared": int(model.n_shared),
         "seed": int(model.random_state)},
    )
