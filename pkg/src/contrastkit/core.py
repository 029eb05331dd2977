"""Dense linear-algebra substrate shared by every contrastive method.

Conventions
-----------
* Covariances use the ``1/n`` normalisation.
* Eigen/singular vectors are sign-fixed so that the entry of largest
  magnitude is positive (ties go to the lowest index); repeated calls on the
  same input are bit-identical.
* Eigenvalues are returned in descending order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ._validation import check_matrix, check_stiefel, check_symmetric
from .exceptions import (
    InvalidArgument,
    NumericalFailure,
    RankDeficient,
    SingularMatrix,
)


@dataclass(frozen=True)
class EigenPairs:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def top(self, d: int) -> "EigenPairs":
        return EigenPairs(self.eigenvalues[:d], self.eigenvectors[:, :d])


@dataclass(frozen=True)
class Embedding:
    """Reduced representation of a data matrix plus how it was produced."""

    values: np.ndarray
    method: str
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive."""
    V = np.array(V, dtype=np.float64, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def center_columns(M) -> tuple[np.ndarray, np.ndarray]:
    """Subtract column means; return the centred matrix and the means."""
    A = check_matrix(M, "M")
    mean = A.mean(axis=0)
    return A - mean, mean


def covariance(M) -> np.ndarray:
    """``(1/n) M^T M`` for an already centred matrix ``M``."""
    A = check_matrix(M, "M")
    C = A.T @ A / A.shape[0]
    return 0.5 * (C + C.T)


def scatter(M) -> np.ndarray:
    A = check_matrix(M, "M")
    C = A.T @ A
    return 0.5 * (C + C.T)


def sym_eigh(S) -> EigenPairs:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending."""
    A = check_symmetric(S)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"symmetric eigensolver did not converge: {exc}") from exc
    # eigh returns ascending order; a stable reversal keeps tied eigenvalues
    # in original index order.
    order = np.argsort(-w, kind="stable")
    return EigenPairs(w[order], fix_signs(V[:, order]))


def top_eigenvectors(S, d: int) -> np.ndarray:
    return sym_eigh(S).eigenvectors[:, :d]


def thin_svd(M, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rank-``k`` truncated SVD ``M ~ U diag(s) V^T``.

    The sign convention is applied to the right singular vectors (the feature
    loadings) and mirrored onto the left ones.
    """
    A = np.asarray(M, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidArgument("thin_svd expects a 2-D matrix")
    n, p = A.shape
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= min(n, p):
        raise InvalidArgument(f"k must lie in [1, {min(n, p)}], got {k!r}")
    k = int(k)
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    V = Vt[:k].T
    U = U[:, :k]
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(k)])
    signs[signs == 0] = 1.0
    return U * signs, s[:k], V * signs


def principal_angles(V1, V2) -> tuple[np.ndarray, np.ndarray]:
    """Cosines (descending) and principal angles (ascending) between two subspaces.

    Both inputs must have orthonormal columns. The cosines are the singular
    values of ``V1^T V2``, clipped to ``[0, 1]``. Angles below ``pi/4`` are
    taken from the sines (singular values of the smaller basis minus its
    projection onto the larger one) because ``arccos`` loses half the
    digits near 1; the rest use ``arccos`` of the clipped cosines.
    """
    A = check_stiefel(V1, "V1")
    B = check_stiefel(V2, "V2")
    if A.shape[0] != B.shape[0]:
        raise InvalidArgument(
            f"subspaces live in different ambient dimensions: {A.shape[0]} != {B.shape[0]}"
        )
    k = min(A.shape[1], B.shape[1])
    if k == 0:
        return np.zeros(0), np.zeros(0)
    s = np.linalg.svd(A.T @ B, compute_uv=False)[:k]
    s = np.clip(s, 0.0, 1.0)
    big, small = (A, B) if A.shape[1] >= B.shape[1] else (B, A)
    resid = small - big @ (big.T @ small)
    sines = np.clip(np.linalg.svd(resid, compute_uv=False)[::-1][:k], 0.0, 1.0)
    theta = np.where(s * s > 0.5, np.arcsin(sines), np.arccos(s))
    return s, theta


def max_principal_angle(V1, V2) -> float:
    """Largest principal angle between the column spans of two matrices.

    Unlike :func:`principal_angles` the inputs need not be orthonormal.
    """
    Q1 = orthonormal_basis(V1)
    Q2 = orthonormal_basis(V2)
    return float(principal_angles(Q1, Q2)[1].max())


def orthonormal_basis(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    Q, _ = np.linalg.qr(A)
    return Q


def default_ridge(S: np.ndarray) -> float:
    p = S.shape[0]
    return 1e-10 * max(float(np.trace(S)), 0.0) / p


def sym_inv_sqrt(S, ridge: float | None = None) -> np.ndarray:
    """``(S + ridge I)^{-1/2}`` through an eigendecomposition.

    ``ridge`` defaults to ``1e-10 * trace(S) / p``.
    """
    A = check_symmetric(S)
    if ridge is None:
        ridge = default_ridge(A)
    if ridge < 0:
        raise InvalidArgument("ridge must be non-negative")
    pairs = sym_eigh(A)
    w = pairs.eigenvalues + ridge
    if w.min() <= 0:
        raise SingularMatrix(
            f"matrix is singular after ridge {ridge:.3e} (smallest eigenvalue {w.min():.3e})"
        )
    V = pairs.eigenvectors
    R = (V / np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def stiefel_qr_retract(A) -> np.ndarray:
    """Map a full-column-rank matrix onto St(p, d) with a sign-normalised QR."""
    M = np.asarray(A, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2 or M.shape[1] > M.shape[0]:
        raise InvalidArgument(f"expected a p x d matrix with d <= p, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalFailure("cannot retract a matrix with non-finite entries")
    Q, R = np.linalg.qr(M)
    diag = np.diag(R)
    tol = max(M.shape) * np.finfo(float).eps * np.abs(diag).max(initial=0.0)
    if M.shape[1] and (not np.any(diag) or np.any(np.abs(diag) <= tol)):
        raise RankDeficient("matrix does not have full column rank")
    signs = np.sign(diag)
    return Q * signs


def random_stiefel(p: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed point of St(p, d) (QR of a Gaussian matrix)."""
    return stiefel_qr_retract(rng.standard_normal((p, d)))


def projector(V) -> np.ndarray:
    Q = orthonormal_basis(V)
    return Q @ Q.T
