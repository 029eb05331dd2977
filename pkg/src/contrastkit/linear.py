"""Matrix-decomposition contrastive methods: CPCA, GCPCA and contrastive CUR."""

from __future__ import annotations

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_n_components, check_pair
from .core import (
    Embedding,
    center_columns,
    covariance,
    default_ridge,
    fix_signs,
    stiefel_qr_retract,
    sym_eigh,
    sym_inv_sqrt,
    thin_svd,
)
from .exceptions import InvalidArgument, SingularMatrix

DEFAULT_GAMMA_GRID = np.logspace(-1, 3, 15)
GCPCA_VARIANTS = ("v1", "v2", "v3")


def _check_gamma(gamma) -> float:
    g = float(gamma)
    if np.isnan(g) or g < 0:
        raise InvalidArgument(f"gamma must be >= 0, got {gamma!r}")
    return g


def contrastive_covariance(CX: np.ndarray, CY: np.ndarray, gamma: float) -> np.ndarray:
    """``CX - gamma * CY``; ``gamma = inf`` keeps only ``-CY``."""
    if np.isinf(gamma):
        return -CY
    return CX - gamma * CY


class _LoadingsTransformer(TransformerMixin, BaseEstimator):
    """Shared ``transform`` for estimators exposing p x d ``loadings_``."""

    def transform(self, X):
        check_is_fitted(self, "loadings_")
        X = check_features(X, self.loadings_.shape[0])
        return (X - self.mean_) @ self.loadings_

    @property
    def components_(self):
        check_is_fitted(self, "loadings_")
        return self.loadings_.T


class CPCA(_LoadingsTransformer):
    """Contrastive PCA.

    Projects onto the top eigenvectors of ``C_X - gamma * C_Y``, which favour
    directions where the foreground varies more than a ``gamma``-weighted
    background.

    Parameters
    ----------
    n_components : int
        Number of directions ``d`` to keep.
    gamma : float
        Contrast strength; ``0`` reduces to ordinary PCA of the foreground and
        ``inf`` keeps the directions of least background variance.

    Attributes
    ----------
    loadings_ : ndarray of shape (n_features, n_components)
        Orthonormal loading matrix ``V``.
    eigenvalues_ : ndarray of shape (n_features,)
        Full descending spectrum of the contrastive covariance.
    contrastive_covariance_ : ndarray of shape (n_features, n_features)
    mean_, background_mean_ : ndarray of shape (n_features,)
    """

    def __init__(self, n_components=2, gamma=1.0):
        self.n_components = n_components
        self.gamma = gamma

    def fit(self, X, Y):
        X, Y = check_pair(X, Y)
        gamma = _check_gamma(self.gamma)
        d = check_n_components(self.n_components, X.shape[1])
        Xc, self.mean_ = center_columns(X)
        Yc, self.background_mean_ = center_columns(Y)
        C = contrastive_covariance(covariance(Xc), covariance(Yc), gamma)
        pairs = sym_eigh(C)
        self.contrastive_covariance_ = C
        self.eigenvalues_ = pairs.eigenvalues
        self.loadings_ = pairs.eigenvectors[:, :d]
        self.n_features_in_ = X.shape[1]
        return self

    def objective(self, V=None) -> float:
        """``tr(V^T C V)`` at ``V`` (defaults to the fitted loadings)."""
        check_is_fitted(self, "loadings_")
        V = self.loadings_ if V is None else np.asarray(V, dtype=float)
        return float(np.trace(V.T @ self.contrastive_covariance_ @ V))


def cpca_fit(X, Y, gamma: float, d: int) -> CPCA:
    return CPCA(n_components=d, gamma=gamma).fit(X, Y)


def cpca_transform(model: CPCA, M) -> Embedding:
    """Project rows of ``M`` (already centred with the training means)."""
    check_is_fitted(model, "loadings_")
    M = check_features(M, model.loadings_.shape[0], "M")
    return Embedding(
        M @ model.loadings_,
        "cpca",
        {"gamma": float(model.gamma), "n_components": int(model.loadings_.shape[1])},
    )


def cpca_gamma_sweep(X, Y, d: int, gammas=None) -> list[CPCA]:
    """Fit CPCA over a grid of contrast strengths (default 15 log-spaced in [0.1, 1000])."""
    grid = DEFAULT_GAMMA_GRID if gammas is None else np.asarray(gammas, dtype=float)
    return [cpca_fit(X, Y, g, d) for g in grid]


def gcpca_objective(V, CX, CY, variant="v1") -> float:
    """Trace functional maximised by the requested GCPCA variant."""
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V.reshape(-1, 1)
    tx = np.trace(V.T @ CX @ V)
    ty = np.trace(V.T @ CY @ V)
    if variant == "v1":
        return float((tx - ty) / (tx + ty))
    if variant == "v2":
        return float(tx / ty)
    if variant == "v3":
        return float((tx - ty) / ty)
    raise InvalidArgument(f"unknown GCPCA variant {variant!r}")


def _generalized_top(CX, CY, d, ridge):
    B = CY + ridge * np.eye(CY.shape[0])
    try:
        w, V = scipy.linalg.eigh(CX, B)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(f"background covariance is singular after ridge: {exc}") from exc
    order = np.argsort(-w, kind="stable")
    return w[order], fix_signs(V[:, order])


class GCPCA(_LoadingsTransformer):
    """Generalized contrastive PCA (hyperparameter-free ratio objectives).

    ``v1`` maximises ``tr(V'(C_X - C_Y)V) / tr(V'(C_X + C_Y)V)`` through the
    whitened matrix ``M^{-1}(C_X - C_Y)M^{-1}`` with ``M = (C_X + C_Y)^{1/2}``.
    ``v2`` (``tr(V'C_X V) / tr(V'C_Y V)``) and ``v3``
    (``tr(V'(C_X - C_Y)V) / tr(V'C_Y V)``) share the generalized eigenvectors
    of ``C_X v = lambda C_Y v``; for ``d > 1`` they use the ratio-trace
    solution rather than an exact trace-ratio iteration.
    """

    def __init__(self, n_components=2, variant="v1", ridge=None):
        self.n_components = n_components
        self.variant = variant
        self.ridge = ridge

    def fit(self, X, Y):
        X, Y = check_pair(X, Y)
        d = check_n_components(self.n_components, X.shape[1])
        Xc, self.mean_ = center_columns(X)
        Yc, self.background_mean_ = center_columns(Y)
        self._fit_covariances(covariance(Xc), covariance(Yc), d)
        self.n_features_in_ = X.shape[1]
        return self

    def _fit_covariances(self, CX, CY, d):
        if self.variant not in GCPCA_VARIANTS:
            raise InvalidArgument(f"variant must be one of {GCPCA_VARIANTS}, got {self.variant!r}")
        if self.variant == "v1":
            total = CX + CY
            ridge = default_ridge(total) if self.ridge is None else self.ridge
            Minv = sym_inv_sqrt(total, ridge)
            pairs = sym_eigh(Minv @ (CX - CY) @ Minv)
            self.eigenvalues_ = pairs.eigenvalues
            V = stiefel_qr_retract(Minv @ pairs.eigenvectors[:, :d])
        else:
            ridge = default_ridge(CY) if self.ridge is None else self.ridge
            if np.trace(CY) + ridge * CY.shape[0] <= 0:
                raise SingularMatrix("background covariance is identically zero")
            w, U = _generalized_top(CX, CY, d, ridge)
            self.eigenvalues_ = w - 1.0 if self.variant == "v3" else w
            V = stiefel_qr_retract(U[:, :d])
        self.loadings_ = V
        self.objective_value_ = gcpca_objective(V, CX, CY, self.variant)
        return self


def gcpca_fit(X, Y, d: int, variant: str = "v1", ridge=None) -> GCPCA:
    return GCPCA(n_components=d, variant=variant, ridge=ridge).fit(X, Y)


def gcpca_fit_covariances(CX, CY, d: int, variant: str = "v1", ridge=None) -> GCPCA:
    """Fit GCPCA directly from a pair of covariance matrices."""
    CX = np.asarray(CX, dtype=float)
    CY = np.asarray(CY, dtype=float)
    if CX.shape != CY.shape or CX.ndim != 2 or CX.shape[0] != CX.shape[1]:
        raise InvalidArgument("covariances must be square and of equal shape")
    d = check_n_components(d, CX.shape[0])
    model = GCPCA(n_components=d, variant=variant, ridge=ridge)
    model._fit_covariances(0.5 * (CX + CX.T), 0.5 * (CY + CY.T), d)
    model.mean_ = np.zeros(CX.shape[0])
    model.n_features_in_ = CX.shape[0]
    return model


def leverage_scores(V: np.ndarray) -> np.ndarray:
    """Row-wise squared norms of a matrix of singular vectors."""
    return np.einsum("ij,ij->i", V, V)


def _top_indices(scores: np.ndarray, k: int) -> np.ndarray:
    # stable sort on the negated scores: ties go to the lowest index
    return np.argsort(-scores, kind="stable")[:k]


class CCUR(TransformerMixin, BaseEstimator):
    """Contrastive CUR: pick foreground-salient columns and rows.

    Column ``j`` gets the contrastive score ``l^X_j / (l^Y_j + eps)`` where
    ``l`` are leverage scores over the top ``n_singular`` right singular
    vectors. The ``n_columns`` highest scores are kept; rows are then the
    highest-leverage rows of the foreground restricted to those columns.
    """

    def __init__(self, n_columns=3, n_rows=0, n_singular=None, eps=None):
        self.n_columns = n_columns
        self.n_rows = n_rows
        self.n_singular = n_singular
        self.eps = eps

    def fit(self, X, Y):
        X, Y = check_pair(X, Y)
        n_x, p = X.shape
        d_cols = check_n_components(self.n_columns, p, "n_columns")
        d_rows = int(self.n_rows)
        if not 0 <= d_rows <= n_x:
            raise InvalidArgument(f"n_rows must lie in [0, {n_x}], got {self.n_rows}")
        K = d_cols if self.n_singular is None else self.n_singular
        k_max = min(min(X.shape), min(Y.shape))
        if isinstance(K, bool) or int(K) != K or not 1 <= K <= k_max:
            raise InvalidArgument(f"n_singular must lie in [1, {k_max}], got {K!r}")
        K = int(K)

        Xc, self.mean_ = center_columns(X)
        Yc, _ = center_columns(Y)
        _, _, VX = thin_svd(Xc, K)
        _, _, VY = thin_svd(Yc, K)
        lx = leverage_scores(VX)
        ly = leverage_scores(VY)
        eps = 1e-6 * float(ly.max()) if self.eps is None else float(self.eps)
        if not eps > 0:
            raise InvalidArgument("eps must be positive")
        scores = lx / (ly + eps)

        cols = _top_indices(scores, d_cols)
        if d_rows:
            sub = Xc[:, cols]
            k_rows = min(K, d_cols, *sub.shape)
            U, _, _ = thin_svd(sub, k_rows)
            self.row_leverage_ = leverage_scores(U)
            rows = _top_indices(self.row_leverage_, d_rows)
        else:
            self.row_leverage_ = np.zeros(0)
            rows = np.zeros(0, dtype=int)

        self.leverage_fg_ = lx
        self.leverage_bg_ = ly
        self.scores_ = scores
        self.eps_ = eps
        self.n_singular_ = K
        self.column_indices_ = cols
        self.row_indices_ = rows
        self.n_features_in_ = p
        return self

    def transform(self, X):
        check_is_fitted(self, "column_indices_")
        X = check_features(X, self.n_features_in_)
        return X[:, self.column_indices_]


def ccur_select(X, Y, K=None, d_cols=3, d_rows=0, eps=None) -> CCUR:
    return CCUR(n_columns=d_cols, n_rows=d_rows, n_singular=K, eps=eps).fit(X, Y)
