import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, p, floor=0.1):
    A = rng.standard_normal((p, p))
    return A @ A.T / p + floor * np.eye(p)


def random_orthonormal(rng, p, d):
    Q, R = np.linalg.qr(rng.standard_normal((p, d)))
    return Q * np.sign(np.diag(R))


def data_with_cov(C, n, rng):
    """An ``n x p`` centered matrix whose 1/n covariance is exactly ``C``."""
    C = np.asarray(C, dtype=float)
    p = C.shape[0]
    Z = rng.standard_normal((n, p))
    Z -= Z.mean(axis=0)
    Q, _ = np.linalg.qr(Z)
    w, U = np.linalg.eigh(C)
    root = U @ np.diag(np.sqrt(np.clip(w, 0, None))) @ U.T
    return np.sqrt(n) * Q @ root
