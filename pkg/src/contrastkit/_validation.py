"""Input validation helpers used by the estimators and functional API."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidArgument, InvalidData


def check_matrix(M, name="X", min_samples=2) -> np.ndarray:
    """Return ``M`` as a 2-D float64 array, rejecting non-finite or tiny inputs."""
    A = np.asarray(M, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2:
        raise InvalidData(f"{name} must be 2-dimensional, got shape {A.shape}")
    if A.shape[1] < 1:
        raise InvalidData(f"{name} has no feature columns")
    if A.shape[0] < min_samples:
        raise InvalidData(f"{name} needs at least {min_samples} rows, got {A.shape[0]}")
    if not np.all(np.isfinite(A)):
        raise InvalidData(f"{name} contains non-finite entries")
    return A


def check_pair(X, Y, names=("X", "Y")) -> tuple[np.ndarray, np.ndarray]:
    X = check_matrix(X, names[0])
    Y = check_matrix(Y, names[1])
    if X.shape[1] != Y.shape[1]:
        raise InvalidArgument(
            f"{names[0]} and {names[1]} must share the feature dimension: "
            f"{X.shape[1]} != {Y.shape[1]}"
        )
    return X, Y


def check_vector(v, n, name="y") -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).ravel()
    if a.shape[0] != n:
        raise InvalidArgument(f"{name} has length {a.shape[0]}, expected {n}")
    if not np.all(np.isfinite(a)):
        raise InvalidData(f"{name} contains non-finite entries")
    return a


def check_n_components(d, p, name="n_components", strict=False) -> int:
    if isinstance(d, bool) or int(d) != d:
        raise InvalidArgument(f"{name} must be an integer, got {d!r}")
    d = int(d)
    upper = p - 1 if strict else p
    if not 1 <= d <= upper:
        raise InvalidArgument(f"{name} must lie in [1, {upper}], got {d}")
    return d


def check_features(M, p, name="X") -> np.ndarray:
    A = np.asarray(M, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2 or A.shape[1] != p:
        raise InvalidArgument(f"{name} must have {p} columns, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidData(f"{name} contains non-finite entries")
    return A


def check_symmetric(S, name="S", rtol=1e-10) -> np.ndarray:
    A = np.asarray(S, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgument(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidData(f"{name} contains non-finite entries")
    scale = max(np.abs(A).max(initial=0.0), 1e-300)
    if np.abs(A - A.T).max(initial=0.0) > rtol * scale:
        raise InvalidArgument(f"{name} is not symmetric")
    return 0.5 * (A + A.T)


def check_stiefel(V, name="V", atol=1e-8) -> np.ndarray:
    A = np.asarray(V, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2 or A.shape[1] > A.shape[0]:
        raise InvalidArgument(f"{name} must be p x d with d <= p, got shape {A.shape}")
    err = np.abs(A.T @ A - np.eye(A.shape[1])).max(initial=0.0)
    if err > atol:
        raise InvalidArgument(f"{name} columns are not orthonormal (max error {err:.2e})")
    return A


def check_random_state_seed(seed) -> int:
    if seed is None:
        return 0
    if isinstance(seed, bool) or int(seed) != seed or seed < 0:
        raise InvalidArgument(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)
