"""Synthetic generators for the contrastive models plus brute-force oracles.

Randomness contract: every generator draws from
``numpy.random.Generator(numpy.random.Philox(seed))`` (Philox-4x64, a
counter-based bit generator), consuming draws in the order written below.
Loading matrices are Haar-distributed orthonormal frames (QR of a Gaussian
matrix, sign-normalised) scaled by the requested signal strength.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .core import random_stiefel
from .exceptions import InvalidArgument, SingularMatrix, UnsupportedSize
from .linear import gcpca_objective

MODELS = (
    "clvm",
    "cde_subspaces",
    "clr",
    "planted_columns",
    "planted_curves",
    "supervised_contrast",
    "bascod",
)
RNG_ALGORITHM = "philox4x64"


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of one synthetic draw.

    ``k`` is the shared dimension and ``d`` the foreground-specific one. For
    ``cde_subspaces`` ``d`` and ``d_y`` are the foreground and background
    subspace dimensions and ``overlap`` their shared part.
    """

    model: str
    p: int = 20
    k: int = 2
    d: int = 2
    n_x: int = 500
    n_y: int = 500
    sigma: float = 0.1
    tau: float = 0.1
    seed: int = 0
    overlap: int = 0
    d_y: int | None = None
    signal_shared: float = 3.0
    signal_salient: float = 2.0
    response_scale: float = 1.0
    planted: tuple = (2, 7, 11)
    n_grid: int = 64
    valid_background: bool = True

    def __post_init__(self):
        if self.model not in MODELS:
            raise InvalidArgument(f"unknown generator model {self.model!r}; choose from {MODELS}")
        for name in ("p", "n_x", "n_y", "n_grid"):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be positive")
        if self.k < 0 or self.d < 0 or self.overlap < 0:
            raise InvalidArgument("k, d and overlap must be non-negative")
        if self.sigma < 0 or self.tau < 0:
            raise InvalidArgument("noise scales must be non-negative")
        object.__setattr__(self, "planted", tuple(int(j) for j in self.planted))
        if self.model == "cde_subspaces":
            dy = self.d if self.d_y is None else self.d_y
            if self.overlap > min(self.d, dy):
                raise InvalidArgument("overlap cannot exceed min(d_x, d_y)")
            if self.d + dy - self.overlap > self.p:
                raise InvalidArgument("subspaces do not fit in the ambient dimension")
        if self.model in ("clvm", "clr") and self.k + self.d > self.p:
            raise InvalidArgument("k + d must not exceed p")
        if self.model == "planted_columns" and any(not 0 <= j < self.p for j in self.planted):
            raise InvalidArgument("planted column index out of range")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["planted"] = list(self.planted)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgument(f"unknown generator fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class GroundTruth:
    S: np.ndarray | None = None
    W: np.ndarray | None = None
    beta: np.ndarray | None = None
    planted_indices: tuple = ()
    extras: dict[str, Any] = field(default_factory=dict)


class Sample(NamedTuple):
    X: np.ndarray
    Y: np.ndarray
    responses: Any
    truth: GroundTruth


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _noise(rng, n, p, sigma):
    return sigma * rng.standard_normal((n, p))


def _clvm(spec, rng):
    # one orthonormal frame so the shared and salient spans are orthogonal
    Q = random_stiefel(spec.p, spec.k + spec.d, rng)
    S = Q[:, : spec.k] * spec.signal_shared
    W = Q[:, spec.k:] * spec.signal_salient
    Zx = rng.standard_normal((spec.n_x, spec.k))
    T = rng.standard_normal((spec.n_x, spec.d))
    X = Zx @ S.T + T @ W.T + _noise(rng, spec.n_x, spec.p, spec.sigma)
    Zy = rng.standard_normal((spec.n_y, spec.k))
    Y = Zy @ S.T + _noise(rng, spec.n_y, spec.p, spec.sigma)
    return S, W, T, X, Y


def generate(spec: GeneratorSpec) -> Sample:
    """Draw ``(X, Y, responses, truth)`` from the named generative model."""
    rng = make_rng(spec.seed)
    m = spec.model

    if m == "clvm":
        S, W, _, X, Y = _clvm(spec, rng)
        return Sample(X, Y, None, GroundTruth(S=S, W=W))

    if m == "clr":
        S, W, T, X, Y = _clvm(spec, rng)
        beta = rng.standard_normal(spec.d)
        norm = np.linalg.norm(beta)
        beta = beta / norm * spec.response_scale if norm > 0 else beta
        r = T @ beta + spec.tau * rng.standard_normal(spec.n_x)
        return Sample(X, Y, r, GroundTruth(S=S, W=W, beta=beta))

    if m == "cde_subspaces":
        dx = spec.d
        dy = spec.d if spec.d_y is None else spec.d_y
        Q = random_stiefel(spec.p, dx + dy - spec.overlap, rng)
        Vx = Q[:, :dx]
        Vy = np.hstack([Q[:, : spec.overlap], Q[:, dx:]])
        X = rng.standard_normal((spec.n_x, dx)) @ Vx.T * spec.signal_shared
        X += _noise(rng, spec.n_x, spec.p, spec.sigma)
        Y = rng.standard_normal((spec.n_y, dy)) @ Vy.T * spec.signal_shared
        Y += _noise(rng, spec.n_y, spec.p, spec.sigma)
        extras = {"V_x": Vx, "V_y": Vy, "contrastive_dim": dx - spec.overlap}
        return Sample(X, Y, None, GroundTruth(S=Vy, W=Vx, extras=extras))

    if m == "planted_columns":
        S = random_stiefel(spec.p, spec.k, rng) * spec.signal_shared if spec.k else np.zeros((spec.p, 0))
        Y = rng.standard_normal((spec.n_y, spec.k)) @ S.T + _noise(rng, spec.n_y, spec.p, spec.sigma)
        X = rng.standard_normal((spec.n_x, spec.k)) @ S.T + _noise(rng, spec.n_x, spec.p, spec.sigma)
        idx = list(spec.planted)
        X[:, idx] += spec.signal_salient * rng.standard_normal((spec.n_x, len(idx)))
        return Sample(X, Y, None, GroundTruth(S=S, planted_indices=tuple(idx)))

    if m == "planted_curves":
        grid = np.arange(spec.n_grid) / spec.n_grid
        slow = np.sin(2 * np.pi * grid)
        fast = np.sin(4 * np.pi * grid)
        Y = spec.signal_shared * rng.standard_normal((spec.n_y, 1)) * slow
        Y = Y + _noise(rng, spec.n_y, spec.n_grid, spec.sigma)
        X = spec.signal_shared * rng.standard_normal((spec.n_x, 1)) * slow
        X = X + spec.signal_salient * rng.standard_normal((spec.n_x, 1)) * fast
        X = X + _noise(rng, spec.n_x, spec.n_grid, spec.sigma)
        return Sample(X, Y, None, GroundTruth(extras={"grid": grid, "shared_curve": slow,
                                                      "salient_curve": fast}))

    if m == "supervised_contrast":
        U = random_stiefel(spec.p, 2, rng)
        u_s, u_f = U[:, 0], U[:, 1]
        X = rng.standard_normal((spec.n_x, spec.p))
        y = X @ u_s + X @ u_f + spec.tau * rng.standard_normal(spec.n_x)
        Xb = rng.standard_normal((spec.n_y, spec.p))
        Xb += (spec.signal_shared - 1.0) * np.outer(Xb @ u_s, u_s)
        yb = Xb @ u_s + spec.tau * rng.standard_normal(spec.n_y)
        truth = GroundTruth(W=u_f[:, None], S=u_s[:, None],
                            extras={"u_f": u_f, "u_s": u_s})
        return Sample(X, Xb, (y, yb), truth)

    # bascod: foreground loadings [G_c, G_s0]; candidate is either nested in
    # span(G_c) or adds an equal-scale direction orthogonal to span(G_0).
    Q = random_stiefel(spec.p, spec.k + 2 * spec.d, rng)
    Gc = Q[:, : spec.k] * spec.signal_shared
    Gs0 = Q[:, spec.k: spec.k + spec.d] * spec.signal_shared
    Gsj = Q[:, spec.k + spec.d:] * spec.signal_shared
    G0 = np.hstack([Gc, Gs0])
    X = rng.standard_normal((spec.n_x, G0.shape[1])) @ G0.T + _noise(rng, spec.n_x, spec.p, spec.sigma)
    Gj = Gc if spec.valid_background else np.hstack([Gc, Gsj])
    Y = rng.standard_normal((spec.n_y, Gj.shape[1])) @ Gj.T + _noise(rng, spec.n_y, spec.p, spec.sigma)
    return Sample(X, Y, None, GroundTruth(S=Gc, W=Gs0, extras={"Gamma_0": G0, "Gamma_j": Gj}))


# --------------------------------------------------------------------------- oracles


def _sphere_grid(p: int, resolution: float):
    """Unit vectors on a hyperspherical-angle grid covering one hemisphere."""
    step = np.deg2rad(resolution)
    inner = np.arange(0.0, np.pi + step / 2, step)
    last = np.arange(0.0, np.pi, step)
    if p == 1:
        yield np.ones((1, 1))
        return
    axes = [inner] * (p - 2) + [last]
    # chunk on the outermost angle to keep memory bounded
    for phi0 in axes[0]:
        rest = np.meshgrid(*axes[1:], indexing="ij") if p > 2 else []
        angles = [np.full(rest[0].size if rest else 1, phi0)] + [a.ravel() for a in rest]
        m = angles[0].size
        V = np.empty((m, p))
        run = np.ones(m)
        for i, a in enumerate(angles):
            V[:, i] = run * np.cos(a)
            run = run * np.sin(a)
        V[:, p - 1] = run
        yield V


def brute_force_trace_ratio(CX, CY, d: int = 1, resolution: float = 1.0, variant: str = "v1"):
    """Grid maximiser of a GCPCA objective over unit vectors (``p <= 4``, ``d = 1``)."""
    CX = np.asarray(CX, dtype=float)
    CY = np.asarray(CY, dtype=float)
    p = CX.shape[0]
    if p > 4:
        raise UnsupportedSize("brute-force grid search is limited to p <= 4")
    if d != 1:
        raise UnsupportedSize("brute-force grid search only handles d = 1")
    best_val = -np.inf
    best_v = None
    for V in _sphere_grid(p, resolution):
        qx = np.einsum("ij,jk,ik->i", V, CX, V)
        qy = np.einsum("ij,jk,ik->i", V, CY, V)
        if variant == "v1":
            with np.errstate(invalid="ignore", divide="ignore"):
                obj = np.where(qx + qy > 0, (qx - qy) / (qx + qy), 0.0)
        elif variant == "v2":
            obj = qx / qy
        elif variant == "v3":
            obj = (qx - qy) / qy
        else:
            raise InvalidArgument(f"unknown GCPCA variant {variant!r}")
        i = int(np.argmax(obj))
        if obj[i] > best_val:
            best_val = float(obj[i])
            best_v = V[i].copy()
    # report the objective through the same functional the solver uses
    return best_v, float(gcpca_objective(best_v, CX, CY, variant)) if np.isfinite(best_val) else best_val


def brute_force_posterior(S, W, sigma2: float, x) -> np.ndarray:
    """``E[(z, t) | x]`` by conditioning the explicit joint Gaussian of latents and ``x``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    p = W.shape[0]
    S = np.zeros((p, 0)) if S is None else np.asarray(S, dtype=float).reshape(p, -1)
    if p > 50:
        raise UnsupportedSize("brute-force posterior is limited to p <= 50")
    L = np.hstack([S, W])
    q = L.shape[1]
    joint = np.empty((q + p, q + p))
    joint[:q, :q] = np.eye(q)
    joint[:q, q:] = L.T
    joint[q:, :q] = L
    joint[q:, q:] = L @ L.T + sigma2 * np.eye(p)
    Sxx = joint[q:, q:]
    if np.linalg.matrix_rank(Sxx) < p:
        raise SingularMatrix("observable covariance is singular")
    xs = np.asarray(x, dtype=float)
    rhs = xs.T if xs.ndim == 2 else xs
    out = joint[:q, q:] @ np.linalg.solve(Sxx, rhs)
    return out.T if xs.ndim == 2 else out


__all__ = [
    "GeneratorSpec",
    "GroundTruth",
    "Sample",
    "generate",
    "brute_force_trace_ratio",
    "brute_force_posterior",
    "make_rng",
    "RNG_ALGORITHM",
]

