import numpy as np
import pytest

from ufslab._linalg import (box_qp_minimize, complete_orthonormal_columns,
                            fix_column_signs, jacobi_svd, principal_angles,
                            sym_inv_sqrt, sym_pinv, sym_sqrt)


class TestJacobiSvd:
    @pytest.mark.parametrize("shape", [(6, 8), (8, 6), (5, 5), (12, 3)])
    def test_matches_lapack(self, rng, shape):
        a = rng.standard_normal(shape)
        u, s, v = jacobi_svd(a)
        s_ref = np.linalg.svd(a, compute_uv=False)
        np.testing.assert_allclose(s, s_ref, atol=1e-12)
        np.testing.assert_allclose(u @ np.diag(s) @ v.T, a, atol=1e-12)
        k = min(shape)
        np.testing.assert_allclose(u.T @ u, np.eye(k), atol=1e-12)
        np.testing.assert_allclose(v.T @ v, np.eye(k), atol=1e-12)

    def test_rank_deficient_completion(self, rng):
        a = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
        u, s, v = jacobi_svd(a)
        assert np.sum(s > 1e-10) == 2
        np.testing.assert_allclose(u.T @ u, np.eye(5), atol=1e-12)
        np.testing.assert_allclose(u @ np.diag(s) @ v.T, a, atol=1e-12)

    def test_zero_matrix(self):
        u, s, v = jacobi_svd(np.zeros((3, 4)))
        np.testing.assert_array_equal(s, 0.0)
        np.testing.assert_allclose(u.T @ u, np.eye(3), atol=1e-14)

    def test_deterministic(self, rng):
        a = rng.standard_normal((7, 4))
        r1 = jacobi_svd(a)
        r2 = jacobi_svd(a.copy())
        for x, y in zip(r1, r2):
            np.testing.assert_array_equal(x, y)


class TestSymHelpers:
    def test_pinv_and_sqrt(self, rng):
        b = rng.standard_normal((5, 3))
        a = b @ b.T  # rank 3 PSD
        pinv, truncated = sym_pinv(a)
        assert truncated
        np.testing.assert_allclose(a @ pinv @ a, a, atol=1e-10)
        root = sym_sqrt(a)
        np.testing.assert_allclose(root @ root, a, atol=1e-10)
        isq, _ = sym_inv_sqrt(a)
        np.testing.assert_allclose(isq @ a @ isq, pinv @ a, atol=1e-9)

    def test_full_rank_not_flagged(self, rng):
        b = rng.standard_normal((4, 4))
        a = b @ b.T + np.eye(4)
        _, truncated = sym_pinv(a)
        assert not truncated


class TestBasisHelpers:
    def test_completion_spans(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        full = complete_orthonormal_columns(q, 6)
        np.testing.assert_allclose(full.T @ full, np.eye(6), atol=1e-12)
        np.testing.assert_array_equal(full[:, :2], q)

    def test_completion_exhausted(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        with pytest.raises(ValueError):
            complete_orthonormal_columns(q, 4)

    def test_principal_angles(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((6, 3)))
        m = q @ rng.standard_normal((3, 3))  # same span, different basis
        assert principal_angles(q, m).max() <= 1e-10

    def test_sign_fix(self):
        a = np.array([[-1.0, 0.0], [0.0, 1.0]])
        f = np.array([[2.0, 3.0], [4.0, 5.0]])
        a2, f2 = fix_column_signs(a, f)
        assert a2[0, 0] == 1.0
        assert f2[0, 0] == -2.0
        np.testing.assert_array_equal(a2[:, 1], a[:, 1])


class TestBoxQp:
    def test_diagonal_clips(self):
        h = np.diag([1.0, 2.0])
        x, res, it = box_qp_minimize(h, np.array([1.5, -0.3]), 0.0, 1.0)
        np.testing.assert_array_equal(x, [1.0, 0.0])
        assert res <= 1e-10
        assert it == 0

    def test_general_matches_lbfgsb(self, rng):
        from scipy.optimize import minimize
        b = rng.standard_normal((3, 3))
        h = b @ b.T + 0.1 * np.eye(3)
        target = np.array([1.4, 0.5, -0.2])
        x, res, _ = box_qp_minimize(h, target, 0.0, 1.0)
        assert res <= 1e-10
        ref = minimize(lambda z: (z - target) @ h @ (z - target),
                       np.clip(target, 0, 1), jac=lambda z: 2 * h @ (z - target),
                       bounds=[(0.0, 1.0)] * 3, method="L-BFGS-B",
                       options={"ftol": 1e-16, "gtol": 1e-12})
        np.testing.assert_allclose(x, ref.x, atol=1e-7)
