"""Pre-analysis checks for a foreground/background pair.

* Background validity (BasCoD-style): is each candidate's loading space
  contained in the foreground's?
* Contrastive dimension: bootstrap test of ``d = 0`` and the thresholded
  principal-angle estimate of ``d``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from numbers import Integral, Real

import numpy as np
from scipy import stats

from ._validation import check_matrix, check_pair
from .core import center_columns, covariance, principal_angles, sym_eigh
from .exceptions import (
    DegenerateData,
    InsufficientData,
    InsufficientFeatures,
    InvalidArgument,
    NoValidBackground,
    RankDeficient,
)

RHO_CLIP = 1.0 - 1e-12


@dataclass(frozen=True)
class SubspaceEstimate:
    V: np.ndarray
    dim: int
    variance_explained: float
    eigenvalues: np.ndarray


def _resolve_dim(eigenvalues: np.ndarray, dim_rule, n: int) -> int:
    p = eigenvalues.shape[0]
    if isinstance(dim_rule, Integral) and not isinstance(dim_rule, bool):
        d = int(dim_rule)
        if not 1 <= d <= min(n, p):
            raise InvalidArgument(f"fixed dimension must lie in [1, {min(n, p)}], got {d}")
        return d
    if isinstance(dim_rule, Real) and not isinstance(dim_rule, bool):
        tau = float(dim_rule)
        if not 0.0 < tau < 1.0:
            raise InvalidArgument(f"variance threshold must lie in (0, 1), got {tau}")
        lam = np.maximum(eigenvalues, 0.0)
        total = lam.sum()
        if not total > 0:
            raise DegenerateData("data has zero variance; no variance threshold is reachable")
        frac = np.cumsum(lam) / total
        return int(np.argmax(frac >= tau - 1e-12)) + 1
    raise InvalidArgument(f"dim_rule must be an int (fixed) or a float in (0, 1), got {dim_rule!r}")


def estimate_subspace(M, dim_rule=0.9) -> SubspaceEstimate:
    """Top eigenvectors of the covariance of ``M``.

    ``dim_rule`` is either an int (fixed dimension) or a float ``tau`` in
    (0, 1): the smallest ``d`` whose eigenvalues explain a fraction ``>= tau``
    of the total variance.
    """
    A = check_matrix(M, "M")
    Ac, _ = center_columns(A)
    pairs = sym_eigh(covariance(Ac))
    d = _resolve_dim(pairs.eigenvalues, dim_rule, A.shape[0])
    lam = np.maximum(pairs.eigenvalues, 0.0)
    total = lam.sum()
    explained = float(lam[:d].sum() / total) if total > 0 else 0.0
    return SubspaceEstimate(pairs.eigenvectors[:, :d], d, min(explained, 1.0), pairs.eigenvalues)


# --------------------------------------------------------------------------- CDE


def _basis(est) -> np.ndarray:
    return est.V if isinstance(est, SubspaceEstimate) else np.asarray(est, dtype=float)


def cde_estimate_dim(Vx, Vy, epsilon: float = 0.05) -> int:
    """``#{k : lambda_k < 1 - epsilon} + max(d_x - d_y, 0)``."""
    if not 0.0 < epsilon < 1.0:
        raise InvalidArgument(f"epsilon must lie in (0, 1), got {epsilon}")
    A, B = _basis(Vx), _basis(Vy)
    lam, _ = principal_angles(A, B)
    return int(np.sum(lam < 1.0 - epsilon)) + max(A.shape[1] - B.shape[1], 0)


@dataclass
class CdeReport:
    lambdas: np.ndarray
    theta_max: float
    lambda_min: float
    p_value: float
    B: int
    d_hat: int
    epsilon: float
    seed: int
    d_x: int
    d_y: int
    bootstrap_lambda_min: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    reason: str = ""
    scheme: str = "pooled"

    def rejects(self, alpha: float) -> bool:
        return self.p_value < alpha

    def to_dict(self) -> dict:
        return {
            "lambdas": [float(v) for v in self.lambdas],
            "theta_max": float(self.theta_max),
            "lambda_min": float(self.lambda_min),
            "p_value": float(self.p_value),
            "B": int(self.B),
            "d_hat": int(self.d_hat),
            "epsilon": float(self.epsilon),
            "seed": int(self.seed),
            "d_x": int(self.d_x),
            "d_y": int(self.d_y),
            "reason": self.reason,
            "scheme": self.scheme,
        }


def _lambda_min(Xs, Ys, d_x, d_y) -> float:
    Vx = estimate_subspace(Xs, d_x).V
    Vy = estimate_subspace(Ys, d_y).V
    lam, _ = principal_angles(Vx, Vy)
    return float(lam.min())


def replicate_rngs(seed: int, B: int) -> list[np.random.Generator]:
    """Independent Philox streams, one per replicate, split from ``seed``."""
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(B)]


BOOTSTRAP_SCHEMES = ("pooled", "foreground")


def contrastive_bootstrap_indices(rng: np.random.Generator, n_x: int, n_y: int,
                                  scheme: str = "pooled"):
    """Row indices into the pooled ``(X; Y)`` stack (foreground rows first).

    ``scheme="pooled"`` draws both replicate datasets from the pooled rows.
    ``scheme="foreground"`` draws the foreground from ``X`` alone and only
    the background from the pooled rows. Background indices always range
    over the pooled set, so the null ``d = 0`` holds by construction.
    """
    if scheme == "pooled":
        ix = rng.integers(0, n_x + n_y, size=n_x)
    elif scheme == "foreground":
        ix = rng.integers(0, n_x, size=n_x)
    else:
        raise InvalidArgument(f"scheme must be one of {BOOTSTRAP_SCHEMES}, got {scheme!r}")
    return ix, rng.integers(0, n_x + n_y, size=n_y)


def cde_test(X, Y, d_x=0.9, d_y=0.9, B: int = 1000, seed: int = 0, epsilon: float = 0.05,
             n_jobs: int = 1, scheme: str = "pooled") -> CdeReport:
    """Bootstrap test of ``H0: d = 0`` plus the dimension estimate ``d_hat``.

    ``d_x`` / ``d_y`` follow :func:`estimate_subspace`'s ``dim_rule``; the
    dimensions chosen on the observed data are reused in every replicate.
    Every replicate draws its background (size ``n_y``) with replacement from
    the pooled ``X ∪ Y``. With ``scheme="pooled"`` (default) the replicate
    foreground (size ``n_x``) is drawn from the pooled rows as well; with
    ``scheme="foreground"`` it is drawn from ``X`` only. The latter keeps the
    observed foreground's own estimation error inside every replicate and is
    markedly conservative: under the null its p-values pile up near 1.
    ``p = mean(lambda_min^(b) < lambda_min)``.
    """
    if scheme not in BOOTSTRAP_SCHEMES:
        raise InvalidArgument(f"scheme must be one of {BOOTSTRAP_SCHEMES}, got {scheme!r}")
    X, Y = check_pair(X, Y)
    Xc, _ = center_columns(X)
    Yc, _ = center_columns(Y)
    sx = estimate_subspace(Xc, d_x)
    sy = estimate_subspace(Yc, d_y)
    dx, dy = sx.dim, sy.dim
    if X.shape[0] <= dx or Y.shape[0] <= dy:
        raise InsufficientData("need more samples than subspace dimensions in each dataset")
    lam, theta = principal_angles(sx.V, sy.V)
    lam_min = float(lam.min())
    d_hat = cde_estimate_dim(sx, sy, epsilon)
    common = dict(lambdas=lam, theta_max=float(theta.max()), lambda_min=lam_min, d_hat=d_hat,
                  epsilon=float(epsilon), seed=int(seed), d_x=dx, d_y=dy, scheme=scheme)
    if dx > dy:
        return CdeReport(p_value=0.0, B=0, reason="d_x > d_y forces d >= d_x - d_y", **common)
    if int(B) < 100:
        raise InvalidArgument(f"need at least 100 bootstrap replicates, got {B}")
    B = int(B)

    pooled = np.vstack([Xc, Yc])
    n_x, n_y = X.shape[0], Y.shape[0]

    def replicate(rng):
        ix, iy = contrastive_bootstrap_indices(rng, n_x, n_y, scheme)
        return _lambda_min(pooled[ix], pooled[iy], dx, dy)

    rngs = replicate_rngs(int(seed), B)
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=int(n_jobs)) as pool:
            boot = np.fromiter(pool.map(replicate, rngs), dtype=float, count=B)
    else:
        boot = np.fromiter(map(replicate, rngs), dtype=float, count=B)
    p_value = int(np.sum(boot < lam_min)) / B
    return CdeReport(p_value=p_value, B=B, bootstrap_lambda_min=boot, **common)


# --------------------------------------------------------------------------- BasCoD


@dataclass
class CandidateResult:
    index: int
    dim: int
    rho: np.ndarray
    z: np.ndarray
    chi2: float
    dof: int
    p_value: float
    rejected: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "dim": self.dim,
            "rho": [float(v) for v in self.rho],
            "z": [float(v) for v in self.z],
            "chi2": float(self.chi2),
            "dof": self.dof,
            "p_value": float(self.p_value),
            "rejected": bool(self.rejected),
        }


@dataclass
class BackgroundTestReport:
    candidates: list
    foreground_dim: int
    epsilon: float
    alpha: float

    @property
    def p_values(self) -> np.ndarray:
        return np.array([c.p_value for c in self.candidates])

    def select(self) -> int:
        """Index of the accepted candidate with the largest p-value (first on ties)."""
        valid = [c for c in self.candidates if not c.rejected]
        if not valid:
            raise NoValidBackground("every candidate background was rejected")
        best = max(valid, key=lambda c: (c.p_value, -c.index))
        return best.index

    def to_dict(self) -> dict:
        return {
            "foreground_dim": self.foreground_dim,
            "epsilon": float(self.epsilon),
            "alpha": float(self.alpha),
            "candidates": [c.to_dict() for c in self.candidates],
        }


def scaled_loadings(est: SubspaceEstimate) -> np.ndarray:
    return est.V * np.sqrt(np.maximum(est.eigenvalues[: est.dim], 0.0))


def projection_correlations(Gamma: np.ndarray, P0: np.ndarray) -> np.ndarray:
    """Uncentred correlation between each column ``g`` and ``P0 g``; equals ``||P0 g|| / ||g||``."""
    proj = P0 @ Gamma
    num = np.einsum("ij,ij->j", Gamma, proj)
    den = np.linalg.norm(Gamma, axis=0) * np.linalg.norm(proj, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(den > 0, num / den, 0.0)
    return np.clip(rho, 0.0, RHO_CLIP)


def fisher_combined_test(rho: np.ndarray, p: int, epsilon: float):
    """Per-column Fisher-z against the margin ``1 - epsilon`` combined by Fisher's method.

    Column ``i`` contributes ``-2 log Phi(Z_i)``: misaligned columns (``rho``
    below the margin) give a small lower tail and a large contribution. The
    p-value is the upper ``chi2_{2d}`` tail.
    """
    rho = np.clip(np.asarray(rho, dtype=float), 0.0, RHO_CLIP)
    z = np.sqrt(p - 3.0) * (np.arctanh(rho) - np.arctanh(1.0 - epsilon))
    chi2 = float(-2.0 * stats.norm.logcdf(z).sum())
    dof = 2 * rho.shape[0]
    return z, chi2, dof, float(stats.chi2.sf(chi2, dof))


def _dim_rules(dim_rule, n_sets):
    if isinstance(dim_rule, (list, tuple, np.ndarray)):
        if len(dim_rule) != n_sets:
            raise InvalidArgument(f"expected {n_sets} dimension rules, got {len(dim_rule)}")
        return list(dim_rule)
    return [dim_rule] * n_sets


def bascod_test(X0, candidates, dim_rule=0.9, epsilon: float = 0.05,
                alpha: float = 0.05) -> BackgroundTestReport:
    """Test each candidate background for loading-space containment in ``X0``.

    ``dim_rule`` is one rule for every dataset or a sequence with one entry
    for the foreground followed by one per candidate.
    """
    X0 = check_matrix(X0, "X0")
    p = X0.shape[1]
    if p <= 3:
        raise InsufficientFeatures("the Fisher transform needs more than 3 features")
    if not 0.0 < epsilon < 0.5:
        raise InvalidArgument(f"epsilon must lie in (0, 0.5), got {epsilon}")
    if not 0.0 < alpha < 1.0:
        raise InvalidArgument(f"alpha must lie in (0, 1), got {alpha}")
    candidates = [check_pair(X0, C, ("X0", f"candidate {j}"))[1] for j, C in enumerate(candidates)]
    rules = _dim_rules(dim_rule, len(candidates) + 1)

    fg = estimate_subspace(X0, rules[0])
    P0 = fg.V @ fg.V.T
    results = []
    for j, (C, rule) in enumerate(zip(candidates, rules[1:])):
        est = estimate_subspace(C, rule)
        rho = projection_correlations(scaled_loadings(est), P0)
        z, chi2, dof, pv = fisher_combined_test(rho, p, epsilon)
        results.append(CandidateResult(j, est.dim, rho, z, chi2, dof, pv, pv < alpha))
    return BackgroundTestReport(results, fg.dim, float(epsilon), float(alpha))


def approx_loadings_from_embedding(Xj, Lj) -> np.ndarray:
    """Least-squares loadings ``B = Xj' Lj (Lj' Lj)^{-1}`` for ``Xj ~ Lj B'``."""
    X = check_matrix(Xj, "Xj", min_samples=1)
    L = np.asarray(Lj, dtype=float)
    if L.ndim == 1:
        L = L.reshape(-1, 1)
    if L.shape[0] != X.shape[0]:
        raise InvalidArgument("embedding and data must have the same number of rows")
    if np.linalg.matrix_rank(L) < L.shape[1]:
        raise RankDeficient("embedding matrix does not have full column rank")
    return np.linalg.solve(L.T @ L, L.T @ X).T
