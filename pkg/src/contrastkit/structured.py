"""Contrastive methods for structured data.

* :class:`CFPCA` for curves sampled on a shared uniform grid.
* :func:`sir_slice_moments` and :class:`CIR` for supervised contrast, where
  the loss is optimised on the Stiefel manifold.
* :class:`CLR` for predicting a foreground-only response from salient latents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_features,
    check_matrix,
    check_n_components,
    check_pair,
    check_random_state_seed,
    check_vector,
)
from .core import (
    Embedding,
    center_columns,
    covariance,
    default_ridge,
    fix_signs,
    random_stiefel,
    scatter,
    stiefel_qr_retract,
    sym_eigh,
)
from .exceptions import (
    DegenerateResponse,
    InvalidArgument,
    NumericalFailure,
    RankDeficient,
    UnsupportedGrid,
)
from .linear import contrastive_covariance
from .model import _EMState, _initial_state, _run_em, posterior_mean

# --------------------------------------------------------------------------- CFPCA


@dataclass(frozen=True)
class CurveSet:
    """Curves sampled on a common grid; ``values[i]`` is curve ``i``."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float).ravel()
        values = check_matrix(self.values, "values")
        if values.shape[1] != grid.shape[0]:
            raise InvalidArgument(
                f"curves have {values.shape[1]} samples but the grid has {grid.shape[0]} points"
            )
        if grid.shape[0] >= 2 and not np.all(np.diff(grid) > 0):
            raise InvalidArgument("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def spacing(self) -> float:
        """Constant grid step; raises for non-uniform grids."""
        diffs = np.diff(self.grid)
        if diffs.size == 0:
            return 1.0
        step = diffs.mean()
        if np.abs(diffs - step).max() > 1e-9 * abs(step):
            raise UnsupportedGrid("grid spacing is not uniform")
        return float(step)


def _check_shared_grid(fg: CurveSet, bg: CurveSet) -> float:
    if fg.grid.shape != bg.grid.shape or not np.allclose(fg.grid, bg.grid, rtol=1e-12, atol=0):
        raise InvalidArgument("foreground and background curves use different grids")
    return fg.spacing


class CFPCA(TransformerMixin, BaseEstimator):
    """Contrastive functional PCA on a uniform grid.

    Solves ``w C v = lambda v`` with ``C = C_X - gamma C_Y`` the discretised
    contrastive covariance and ``w`` the grid step. Eigenfunctions are
    normalised so that ``w * ||v||^2 = 1`` (discrete L2).
    """

    def __init__(self, n_components=2, gamma=1.0):
        self.n_components = n_components
        self.gamma = gamma

    def fit(self, X: CurveSet, Y: CurveSet):
        w = _check_shared_grid(X, Y)
        T = X.grid.shape[0]
        d = check_n_components(self.n_components, T)
        gamma = float(self.gamma)
        if np.isnan(gamma) or gamma < 0:
            raise InvalidArgument(f"gamma must be >= 0, got {self.gamma!r}")
        Xc, self.mean_ = center_columns(X.values)
        Yc, self.background_mean_ = center_columns(Y.values)
        C = contrastive_covariance(covariance(Xc), covariance(Yc), gamma)
        pairs = sym_eigh(C)
        self.grid_ = X.grid
        self.weight_ = w
        self.contrastive_covariance_ = C
        self.eigenvalues_ = w * pairs.eigenvalues
        self.eigenfunctions_ = pairs.eigenvectors[:, :d] / np.sqrt(w)
        self.n_features_in_ = T
        return self

    def transform(self, X):
        """Functional scores ``w * <x - mean, v>`` for each curve."""
        check_is_fitted(self, "eigenfunctions_")
        values = X.values if isinstance(X, CurveSet) else X
        values = check_features(values, self.n_features_in_)
        return self.weight_ * (values - self.mean_) @ self.eigenfunctions_


def cfpca_fit(fg: CurveSet, bg: CurveSet, gamma: float, d: int) -> CFPCA:
    return CFPCA(n_components=d, gamma=gamma).fit(fg, bg)


# --------------------------------------------------------------------------- SIR


@dataclass(frozen=True)
class SliceMoments:
    means: np.ndarray      # H x p
    weights: np.ndarray    # H
    M: np.ndarray          # p x p, sum_h w_h m_h m_h^T


def default_n_slices(n: int) -> int:
    return max(2, min(10, n // 20))


def slice_indices(y, H: int) -> list[np.ndarray]:
    """Equal-count slices of ``argsort(y)``; the first ``n mod H`` slices get one extra."""
    order = np.argsort(y, kind="stable")
    n = order.shape[0]
    base, extra = divmod(n, H)
    sizes = [base + 1 if h < extra else base for h in range(H)]
    bounds = np.cumsum([0] + sizes)
    return [order[bounds[h]:bounds[h + 1]] for h in range(H)]


def sir_slice_moments(X, y, H: int | None = None) -> SliceMoments:
    """Slice means of ``X`` by response quantiles and ``M = sum_h p_h m_h m_h^T``."""
    X = check_matrix(X)
    n = X.shape[0]
    y = check_vector(y, n, "y")
    H = default_n_slices(n) if H is None else H
    if isinstance(H, bool) or int(H) != H or H < 2:
        raise InvalidArgument(f"number of slices must be an integer >= 2, got {H!r}")
    H = int(H)
    if n < 2 * H:
        raise InvalidArgument(f"need at least {2 * H} samples for {H} slices, got {n}")
    if np.ptp(y) == 0:
        raise DegenerateResponse("response is constant; slicing carries no information")
    groups = slice_indices(y, H)
    means = np.stack([X[g].mean(axis=0) for g in groups])
    weights = np.array([g.shape[0] / n for g in groups])
    M = (means * weights[:, None]).T @ means
    return SliceMoments(means, weights, 0.5 * (M + M.T))


def sir_fit(X, y, d: int, H: int | None = None) -> np.ndarray:
    """SIR loadings in the ``V`` parameterisation: ``V = C_X^{-1} W`` with ``W``
    the top-``d`` eigenvectors of the sliced ``Cov(E[X|y])``; orthonormalised."""
    X = check_matrix(X)
    d = check_n_components(d, X.shape[1])
    Xc, _ = center_columns(X)
    mom = sir_slice_moments(Xc, y, H)
    W = sym_eigh(mom.M).eigenvectors[:, :d]
    CX = covariance(Xc)
    CX = CX + default_ridge(CX) * np.eye(CX.shape[0])
    return stiefel_qr_retract(np.linalg.solve(CX, W))


# --------------------------------------------------------------------------- CIR


def _solve_gram(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``G x = rhs`` for a small SPD ``G`` with ridge escalation."""
    scale = max(float(np.trace(G)), 1e-300)
    ridge = 0.0
    for _ in range(8):
        Gr = G + ridge * np.eye(G.shape[0])
        try:
            if np.linalg.cond(Gr) < 1e13:
                return np.linalg.solve(Gr, rhs)
        except np.linalg.LinAlgError:
            pass
        ridge = 1e-10 * scale if ridge == 0.0 else ridge * 10.0
    raise NumericalFailure("V^T C^2 V stayed singular after ridge escalation")


def _ratio_term(V, A, B):
    """``tr(V'AV (V'BV)^{-1})`` and its Euclidean gradient."""
    AV = A @ V
    BV = B @ V
    G = V.T @ BV
    G = 0.5 * (G + G.T)
    VAV = V.T @ AV
    K = _solve_gram(G, VAV)                 # G^{-1} V'AV
    f = float(np.trace(K))
    grad = 2.0 * (_solve_gram(G, AV.T).T - BV @ _solve_gram(G, K.T).T)
    return f, grad


def cir_loss(V, A, B, A_bg, B_bg, gamma: float) -> float:
    """``-tr(V'AV(V'BV)^{-1}) + gamma tr(V'A~V(V'B~V)^{-1})`` with ``B = C_X^2``."""
    V = np.asarray(V, dtype=float).reshape(A.shape[0], -1)
    f, _ = _ratio_term(V, A, B)
    loss = -f
    if gamma:
        g, _ = _ratio_term(V, A_bg, B_bg)
        loss += gamma * g
    return loss


def cir_gradient(V, A, B, A_bg, B_bg, gamma: float) -> np.ndarray:
    """Euclidean gradient of :func:`cir_loss` with respect to ``V``."""
    V = np.asarray(V, dtype=float).reshape(A.shape[0], -1)
    _, gf = _ratio_term(V, A, B)
    grad = -gf
    if gamma:
        _, gg = _ratio_term(V, A_bg, B_bg)
        grad = grad + gamma * gg
    return grad


@dataclass
class StiefelTrace:
    V: np.ndarray
    loss: float
    losses: list
    iterates_orthonormality: list
    converged: bool
    n_iter: int


def minimize_on_stiefel(V0, loss_fn, grad_fn, max_iter=500, step0=1.0, tol=1e-9,
                        armijo=1e-4, max_halvings=60) -> StiefelTrace:
    """Projected gradient descent with QR retraction and Armijo backtracking.

    The first trial step is ``step0``. Later trial steps use the
    Barzilai-Borwein ratio of successive iterate and gradient differences
    (falling back to twice the last accepted step when that ratio is not
    positive). Each trial is halved until the Armijo condition holds, so the
    loss never increases across accepted steps.
    """
    V = stiefel_qr_retract(V0)
    f = loss_fn(V)
    losses = [f]
    ortho = [float(np.abs(V.T @ V - np.eye(V.shape[1])).max())]
    step = step0
    converged = False
    it = 0
    pending = None
    for it in range(1, max_iter + 1):
        g = grad_fn(V) if pending is None else pending
        sym = V.T @ g
        rg = g - V @ (0.5 * (sym + sym.T))
        gn2 = float(np.sum(rg * rg))
        if np.sqrt(gn2) <= tol * max(1.0, abs(f)):
            converged = True
            break
        t = step
        accepted = False
        for _ in range(max_halvings):
            try:
                Vn = stiefel_qr_retract(V - t * rg)
                fn = loss_fn(Vn)
            except (RankDeficient, NumericalFailure):
                fn = np.inf
            if fn <= f - armijo * t * gn2:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = True  # no descent available at machine precision
            break
        decrease = f - fn
        g_new = grad_fn(Vn)
        sym = Vn.T @ g_new
        rg_new = g_new - Vn @ (0.5 * (sym + sym.T))
        s_k = Vn - V
        y_k = rg_new - rg
        sy = float(np.sum(s_k * y_k))
        step = float(np.sum(s_k * s_k)) / sy if sy > 0 else 2.0 * t
        step = min(max(step, 1e-12), 1e12)
        V, f = Vn, fn
        pending = g_new
        losses.append(f)
        ortho.append(float(np.abs(V.T @ V - np.eye(V.shape[1])).max()))
        if decrease <= tol * 1e-3 * max(1.0, abs(f)):
            converged = True
            break
    return StiefelTrace(V, f, losses, ortho, converged, it)


def cir_matrices(X, y, Xb, yb, H=None, H_bg=None):
    """``(A, C_X^2, A~, C_X~^2)`` with ``A = C_X Cov(m_y) C_X`` from slicing."""
    Xc, _ = center_columns(X)
    Xbc, _ = center_columns(Xb)
    CX = covariance(Xc)
    CB = covariance(Xbc)
    M = sir_slice_moments(Xc, y, H).M
    Mb = sir_slice_moments(Xbc, yb, H_bg).M
    return CX @ M @ CX, CX @ CX, CB @ Mb @ CB, CB @ CB


def cir_spectral_start(A, B, A_bg, gamma, d):
    """Top generalized eigenvectors of ``(A - gamma A~, B)``, exact when ``gamma = 0``."""
    Br = B + default_ridge(B) * np.eye(B.shape[0])
    w, U = scipy.linalg.eigh(A - gamma * A_bg, Br)
    order = np.argsort(-w, kind="stable")
    return stiefel_qr_retract(fix_signs(U[:, order[:d]]))


class CIR(TransformerMixin, BaseEstimator):
    """Contrastive inverse regression.

    Minimises
    ``L(V) = -tr(V'AV (V'C_X^2 V)^{-1}) + gamma tr(V'A~V (V'C~^2 V)^{-1})``
    over St(p, d) by projected gradient descent with QR retraction. Two starts
    are run (spectral and random); the lower final loss wins, ties going to
    the spectral start.

    ``fit(X, y, background, background_y)``.
    """

    def __init__(self, n_components=1, gamma=1.0, n_slices=None, n_slices_background=None,
                 max_iter=500, step0=1.0, tol=1e-9, init="best", random_state=0):
        self.n_components = n_components
        self.gamma = gamma
        self.n_slices = n_slices
        self.n_slices_background = n_slices_background
        self.max_iter = max_iter
        self.step0 = step0
        self.tol = tol
        self.init = init
        self.random_state = random_state

    def fit(self, X, y, background, background_y):
        X, Xb = check_pair(X, background, ("X", "background"))
        y = check_vector(y, X.shape[0], "y")
        yb = check_vector(background_y, Xb.shape[0], "background_y")
        p = X.shape[1]
        d = check_n_components(self.n_components, p)
        gamma = float(self.gamma)
        if np.isnan(gamma) or gamma < 0:
            raise InvalidArgument(f"gamma must be >= 0, got {self.gamma!r}")
        if self.init not in ("best", "spectral", "random"):
            raise InvalidArgument("init must be 'best', 'spectral' or 'random'")
        seed = check_random_state_seed(self.random_state)
        H = default_n_slices(X.shape[0]) if self.n_slices is None else self.n_slices
        Hb = default_n_slices(Xb.shape[0]) if self.n_slices_background is None else self.n_slices_background

        self.mean_ = X.mean(axis=0)
        A, B, Ab, Bb = cir_matrices(X, y, Xb, yb, H, Hb)
        self.matrices_ = (A, B, Ab, Bb)

        def loss(V):
            return cir_loss(V, A, B, Ab, Bb, gamma)

        def grad(V):
            return cir_gradient(V, A, B, Ab, Bb, gamma)

        runs = {}
        if self.init in ("best", "spectral"):
            runs["spectral"] = cir_spectral_start(A, B, Ab, gamma, d)
        if self.init in ("best", "random"):
            rng = np.random.Generator(np.random.Philox(seed))
            runs["random"] = random_stiefel(p, d, rng)
        results = {
            name: minimize_on_stiefel(V0, loss, grad, int(self.max_iter), float(self.step0),
                                      float(self.tol))
            for name, V0 in runs.items()
        }
        best = "spectral" if "spectral" in results else "random"
        if "random" in results and "spectral" in results:
            fs, fr = results["spectral"].loss, results["random"].loss
            if fr < fs - 1e-12 * max(1.0, abs(fs)):
                best = "random"
        res = results[best]
        self.loadings_ = res.V
        self.loss_ = res.loss
        self.objective_trace_ = np.asarray(res.losses)
        self.orthonormality_trace_ = np.asarray(res.iterates_orthonormality)
        self.converged_ = res.converged
        self.n_iter_ = res.n_iter
        self.start_ = best
        self.runs_ = results
        self.n_slices_fg_ = int(H)
        self.n_slices_bg_ = int(Hb)
        self.n_features_in_ = p
        return self

    def transform(self, X):
        check_is_fitted(self, "loadings_")
        X = check_features(X, self.n_features_in_)
        return (X - self.mean_) @ self.loadings_

    def fit_transform(self, X, y, background, background_y):
        return self.fit(X, y, background, background_y).transform(X)


def cir_fit(fg, bg, gamma: float, d: int, H=None, opt=None, seed: int = 0) -> CIR:
    """Functional front end: ``fg = (X, y)``, ``bg = (X~, y~)``.

    ``H`` is an int or an ``(H_fg, H_bg)`` pair; ``opt`` may set
    ``max_iter``, ``step0``, ``tol`` and ``init``.
    """
    opt = dict(opt or {})
    H_fg, H_bg = (H, H) if H is None or np.isscalar(H) else H
    model = CIR(n_components=d, gamma=gamma, n_slices=H_fg, n_slices_background=H_bg,
                random_state=seed, **opt)
    return model.fit(fg[0], fg[1], bg[0], bg[1])


# --------------------------------------------------------------------------- CLR


class CLR(RegressorMixin, TransformerMixin, BaseEstimator):
    """Contrastive linear regression fitted by EM.

    ``x = S z_a + W t + e``, ``y = S z_b + e`` (background, no response) and
    ``r = beta' t + eta``. ``predict`` returns ``beta' E[t | x]`` plus the
    training response mean.

    ``fit(X, r, background)``.
    """

    def __init__(self, n_components=1, n_shared=None, tol=1e-8, max_iter=1000, random_state=0):
        self.n_components = n_components
        self.n_shared = n_shared
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, r, background):
        X, Y = check_pair(X, background, ("X", "background"))
        r = check_vector(r, X.shape[0], "r")
        p = X.shape[1]
        d = check_n_components(self.n_components, p)
        k = d if self.n_shared is None else int(self.n_shared)
        if k < 0 or k + d > p:
            raise InvalidArgument(f"need 0 <= n_shared and n_shared + n_components <= {p}")
        seed = check_random_state_seed(self.random_state)

        Xc, self.mean_ = center_columns(X)
        Yc, self.background_mean_ = center_columns(Y)
        self.response_mean_ = float(r.mean())
        rc = r - self.response_mean_

        st = _initial_state(Xc, Yc, k, d, seed)
        T0 = posterior_mean(np.hstack([st.S, st.W]), st.sigma2, Xc)[:, k:]
        beta0, *_ = np.linalg.lstsq(T0, rc, rcond=None)
        var_r = float(rc @ rc / rc.shape[0])
        tau0 = float(np.mean((rc - T0 @ beta0) ** 2))
        st = _EMState(st.S, st.W, st.sigma2, beta0, max(tau0, 1e-6 * var_r, 1e-300))

        O = np.hstack([Xc, rc[:, None]])
        st, trace, converged = _run_em(st, scatter(O), X.shape[0], scatter(Yc), Y.shape[0], p,
                                       self.tol, int(self.max_iter))
        self.shared_loadings_ = st.S
        self.salient_loadings_ = st.W
        self.coef_ = st.beta
        self.sigma2_ = st.sigma2
        self.tau2_ = st.tau2
        self.loglik_trace_ = trace
        self.converged_ = converged
        self.n_iter_ = len(trace) - 1
        self.n_features_in_ = p
        return self

    def _salient_posterior(self, Xc):
        L = np.hstack([self.shared_loadings_, self.salient_loadings_])
        k = self.shared_loadings_.shape[1]
        return posterior_mean(L, self.sigma2_, Xc)[:, k:]

    def transform(self, X):
        check_is_fitted(self, "coef_")
        X = check_features(X, self.n_features_in_)
        return self._salient_posterior(X - self.mean_)

    def predict(self, X):
        return self.transform(X) @ self.coef_ + self.response_mean_


def clr_fit(X, r, Y, d: int, tol: float = 1e-8, max_iter: int = 1000, seed: int = 0,
            k: int | None = None) -> CLR:
    return CLR(n_components=d, n_shared=k, tol=tol, max_iter=max_iter,
               random_state=seed).fit(X, r, Y)


def clr_predict(model: CLR, x_new):
    """``beta' E[t | x]`` for input already centred with the training mean."""
    check_is_fitted(model, "coef_")
    x = np.asarray(x_new, dtype=float)
    single = x.ndim == 1
    x = check_features(x, model.n_features_in_, "x_new")
    out = model._salient_posterior(x) @ model.coef_
    return float(out[0]) if single else out


def clr_embedding(model: CLR, X) -> Embedding:
    check_is_fitted(model, "coef_")
    X = check_features(X, model.n_features_in_)
    return Embedding(model._salient_posterior(X), "clr",
                     {"n_components": int(model.n_components), "seed": int(model.random_state)})
