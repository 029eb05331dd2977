import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from contrastkit.core import (
    center_columns,
    covariance,
    principal_angles,
    stiefel_qr_retract,
    sym_eigh,
    sym_inv_sqrt,
    thin_svd,
)
from contrastkit.exceptions import InvalidArgument, InvalidData, RankDeficient, SingularMatrix

from conftest import random_orthonormal, random_spd


def faddeev_leverrier(S):
    """Characteristic polynomial coefficients without any eigen-solver."""
    p = S.shape[0]
    coeffs = [1.0]
    M = np.zeros_like(S)
    for k in range(1, p + 1):
        M = S @ M + coeffs[-1] * np.eye(p)
        coeffs.append(-np.trace(S @ M) / k)
    return np.array(coeffs)


class TestCenterColumns:
    def test_two_point(self):
        C, mu = center_columns(np.array([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(C, [[-1, -1], [1, 1]])
        np.testing.assert_array_equal(mu, [2, 3])

    def test_zero_matrix(self):
        C, mu = center_columns(np.zeros((3, 2)))
        assert not C.any() and not mu.any()

    def test_random_means_vanish(self, rng):
        C, _ = center_columns(rng.standard_normal((10, 4)) * 100 + 7)
        for j in range(4):
            assert abs(math.fsum(C[:, j]) / 10) <= 1e-12

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidData):
            center_columns(np.array([[1.0, np.nan], [2.0, 3.0]]))


class TestCovariance:
    def test_two_point(self):
        np.testing.assert_allclose(covariance(np.array([[-1.0, -1.0], [1.0, 1.0]])), [[1, 1], [1, 1]])

    def test_orthogonal_columns(self):
        n, a, b = 4, 2.0, 3.0
        M = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        M[:, 0] *= a
        M[:, 1] *= b
        np.testing.assert_allclose(covariance(M), np.diag([a * a, b * b]), atol=1e-14)
        assert n == M.shape[0]

    def test_double_loop_oracle(self, rng):
        M, _ = center_columns(rng.standard_normal((20, 5)))
        ref = np.zeros((5, 5))
        for i in range(20):
            for a in range(5):
                for b in range(5):
                    ref[a, b] += M[i, a] * M[i, b]
        np.testing.assert_allclose(covariance(M), ref / 20, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (6, 3), elements=st.floats(-1e3, 1e3)))
    def test_psd(self, M):
        C = covariance(center_columns(M)[0])
        assert np.linalg.eigvalsh(C).min() >= -1e-10 * max(np.trace(C), 1e-300)


class TestSymEigh:
    def test_diagonal(self):
        pairs = sym_eigh(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_array_equal(pairs.eigenvalues, [3, 2, 1])
        np.testing.assert_array_equal(pairs.eigenvectors, np.eye(3)[:, [0, 2, 1]])

    def test_identity(self):
        np.testing.assert_allclose(sym_eigh(np.eye(4)).eigenvalues, 1.0)

    def test_characteristic_polynomial_oracle(self, rng):
        A = rng.standard_normal((6, 6))
        S = (A + A.T) / 2
        roots = np.sort(np.roots(faddeev_leverrier(S)).real)[::-1]
        np.testing.assert_allclose(sym_eigh(S).eigenvalues, roots, atol=1e-8)

    def test_sign_convention_and_determinism(self, rng):
        A = rng.standard_normal((5, 5))
        S = A + A.T
        V1 = sym_eigh(S).eigenvectors
        V2 = sym_eigh(S.copy()).eigenvectors
        assert np.array_equal(V1, V2)
        idx = np.argmax(np.abs(V1), axis=0)
        assert np.all(V1[idx, np.arange(5)] > 0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 20), st.integers(0, 2**32 - 1))
    def test_reconstruction(self, p, seed):
        A = np.random.default_rng(seed).standard_normal((p, p))
        S = (A + A.T) / 2
        pr = sym_eigh(S)
        rec = pr.eigenvectors @ np.diag(pr.eigenvalues) @ pr.eigenvectors.T
        assert np.linalg.norm(S - rec) <= 1e-8 * max(np.linalg.norm(S), 1e-300)
        assert np.all(np.diff(pr.eigenvalues) <= 0)
        res = S @ pr.eigenvectors - pr.eigenvectors * pr.eigenvalues
        assert np.all(np.linalg.norm(res, axis=0) <= 1e-8 * np.maximum(1, np.abs(pr.eigenvalues)))


class TestThinSvd:
    def test_diag_embedded(self):
        M = np.zeros((3, 2))
        M[0, 0], M[1, 1] = 5.0, 3.0
        _, s, _ = thin_svd(M, 1)
        np.testing.assert_allclose(s, [5.0])

    def test_orthogonal(self, rng):
        Q = random_orthonormal(rng, 4, 4)
        np.testing.assert_allclose(thin_svd(Q, 4)[1], 1.0)

    def test_gram_oracle(self, rng):
        M = rng.standard_normal((8, 5))
        _, s, _ = thin_svd(M, 5)
        np.testing.assert_allclose(s, np.sqrt(sym_eigh(M.T @ M).eigenvalues), rtol=1e-10)

    def test_eckart_young(self, rng):
        M = rng.standard_normal((8, 5))
        U, s, V = thin_svd(M, 2)
        resid = np.linalg.norm(M - U @ np.diag(s) @ V.T)
        sv = np.linalg.svd(M, compute_uv=False)
        assert abs(resid - np.sqrt(np.sum(sv[2:] ** 2))) <= 1e-8

    @pytest.mark.parametrize("k", [0, 6])
    def test_k_out_of_range(self, rng, k):
        with pytest.raises(InvalidArgument):
            thin_svd(rng.standard_normal((8, 5)), k)


class TestPrincipalAngles:
    def test_identical(self):
        lam, th = principal_angles(np.eye(3)[:, :2], np.eye(3)[:, :2])
        np.testing.assert_allclose(lam, [1, 1])
        np.testing.assert_allclose(th, [0, 0])

    def test_orthogonal(self):
        lam, th = principal_angles(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))
        np.testing.assert_allclose(lam, [0.0], atol=1e-15)
        np.testing.assert_allclose(th, [np.pi / 2])

    def test_45_degrees(self):
        lam, th = principal_angles(np.array([[1.0], [0.0]]), np.array([[1.0], [1.0]]) / np.sqrt(2))
        np.testing.assert_allclose(lam, [1 / np.sqrt(2)])
        np.testing.assert_allclose(th, [np.pi / 4])

    def test_mismatch(self):
        with pytest.raises(InvalidArgument):
            principal_angles(np.eye(3)[:, :1], np.eye(4)[:, :1])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 8), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
    def test_symmetry_and_rotation(self, p, d1, d2, seed):
        rng = np.random.default_rng(seed)
        d1, d2 = min(d1, p), min(d2, p)
        V1, V2 = random_orthonormal(rng, p, d1), random_orthonormal(rng, p, d2)
        _, a = principal_angles(V1, V2)
        _, b = principal_angles(V2, V1)
        np.testing.assert_allclose(a, b, atol=1e-12)
        _, c = principal_angles(V1 @ random_orthonormal(rng, d1, d1), V2)
        np.testing.assert_allclose(a, c, atol=1e-12)
        assert len(a) == min(d1, d2)


class TestSymInvSqrt:
    def test_diag(self):
        np.testing.assert_allclose(sym_inv_sqrt(np.diag([4.0, 9.0]), 0.0), np.diag([0.5, 1 / 3]))

    def test_identity(self):
        np.testing.assert_allclose(sym_inv_sqrt(np.eye(3), 0.0), np.eye(3))

    def test_multiply_back(self, rng):
        S = random_spd(rng, 5)
        R = sym_inv_sqrt(S, 0.0)
        np.testing.assert_allclose(R @ R @ S, np.eye(5), atol=1e-8)
        np.testing.assert_allclose(R, R.T)

    def test_singular(self):
        with pytest.raises(SingularMatrix):
            sym_inv_sqrt(np.diag([1.0, 0.0]), 0.0)


class TestRetraction:
    def test_fixed_point(self, rng):
        V = random_orthonormal(rng, 5, 2)
        np.testing.assert_allclose(stiefel_qr_retract(V), V, atol=1e-12)

    def test_scaled_axis(self):
        np.testing.assert_allclose(stiefel_qr_retract(np.array([[2.0], [0.0], [0.0]])), [[1], [0], [0]])

    def test_projector(self, rng):
        A = rng.standard_normal((6, 2))
        Q = stiefel_qr_retract(A)
        np.testing.assert_allclose(Q.T @ Q, np.eye(2), atol=1e-10)
        PA = A @ np.linalg.solve(A.T @ A, A.T)
        np.testing.assert_allclose(Q @ Q.T, PA, atol=1e-10)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            stiefel_qr_retract(np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]]))
