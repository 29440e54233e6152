import numpy as np
import pytest

from ufslab._linalg import principal_angles
from ufslab.cdm import (ace, build_cdm, cdm_svd, markov_transport,
                        maxcorr_features)
from ufslab.errors import (ConvergenceError, InvalidInfoVectorError,
                           InvalidInputError, SingularReferenceError)
from ufslab.prob import FiniteDist, InfoVector, JointDist, info_vector

from conftest import random_joint


def joint_from_modes(px, py, sigmas, rng):
    """Joint whose dependence matrix has prescribed singular values."""
    nx, ny = px.n, py.n
    qx, _ = np.linalg.qr(
        np.column_stack([px.sqrt, rng.standard_normal((nx, nx - 1))]))
    qy, _ = np.linalg.qr(
        np.column_stack([py.sqrt, rng.standard_normal((ny, ny - 1))]))
    b = np.zeros((ny, nx))
    for i, s in enumerate(sigmas):
        b += s * np.outer(qy[:, i + 1], qx[:, i + 1])
    table = np.outer(py.probs, px.probs) + np.outer(py.sqrt, px.sqrt) * b
    return JointDist(table)


class TestBuildCdm:
    def test_independent_joint_is_zero(self, rng):
        px = FiniteDist.uniform(5)
        py = FiniteDist(np.array([0.1, 0.2, 0.3, 0.4]))
        j = JointDist(np.outer(py.probs, px.probs))
        c = build_cdm(j)
        np.testing.assert_allclose(c.mat, 0.0, atol=1e-15)

    def test_two_by_two_entries_and_sigma(self, small_joint):
        c = build_cdm(small_joint)
        np.testing.assert_allclose(np.abs(c.mat), 0.1, atol=1e-15)
        sig = np.linalg.svd(c.mat, compute_uv=False)
        np.testing.assert_allclose(sig, [0.2, 0.0], atol=1e-15)

    def test_permutation_joint_hits_sigma_one(self):
        j = JointDist(np.diag([0.5, 0.5]))
        c = build_cdm(j)
        s = cdm_svd(c)
        np.testing.assert_allclose(s.sigmas[0], 1.0, atol=1e-12)

    def test_null_directions(self, rng):
        for _ in range(10):
            j = random_joint(rng, 7, 5)
            c = build_cdm(j)
            assert np.linalg.norm(c.mat @ c.marginal_x.sqrt) <= 1e-10
            assert np.linalg.norm(c.mat.T @ c.marginal_y.sqrt) <= 1e-10

    def test_singular_marginal(self):
        j = JointDist(np.array([[0.5, 0.5], [0.0, 0.0]]))
        with pytest.raises(SingularReferenceError):
            build_cdm(j)


class TestCdmSvd:
    def test_zero_matrix_all_zero(self, rng):
        px = FiniteDist.uniform(4)
        py = FiniteDist.uniform(3)
        j = JointDist(np.outer(py.probs, px.probs))
        s = cdm_svd(build_cdm(j))
        np.testing.assert_allclose(s.sigmas, 0.0, atol=1e-14)

    def test_against_lapack_oracle(self, rng):
        for _ in range(8):
            j = random_joint(rng, 8, 6)
            c = build_cdm(j)
            s = cdm_svd(c)
            ref = np.linalg.svd(c.mat, compute_uv=False)
            np.testing.assert_allclose(s.sigmas, ref, atol=1e-9)
            # subspace agreement for the leading well-separated block
            u_ref, _, vt_ref = np.linalg.svd(c.mat)
            for k in (1, 2, 3):
                if ref[k - 1] - ref[k] < 1e-6:
                    continue
                ang_x = principal_angles(s.psi_x[:, :k], vt_ref[:k].T)
                ang_y = principal_angles(s.psi_y[:, :k], u_ref[:, :k])
                assert ang_x.max() <= 1e-7
                assert ang_y.max() <= 1e-7

    def test_structure_invariants(self, rng):
        j = random_joint(rng, 9, 5)
        c = build_cdm(j)
        s = cdm_svd(c)
        assert np.all(np.diff(s.sigmas) <= 1e-15)
        assert s.sigmas[0] <= 1 + 1e-10
        assert s.sigmas[-1] <= 1e-10
        k = s.k_max
        np.testing.assert_allclose(s.psi_x.T @ s.psi_x, np.eye(k),
                                   atol=1e-10)
        np.testing.assert_allclose(s.psi_y.T @ s.psi_y, np.eye(k),
                                   atol=1e-10)
        err = np.linalg.norm(s.reconstruct() - c.mat)
        assert err <= 1e-9 * max(1.0, c.frob)

    def test_sign_convention(self, rng):
        j = random_joint(rng, 6, 6)
        s = cdm_svd(build_cdm(j))
        for col in s.psi_x.T:
            nz = col[np.abs(col) > 1e-12]
            assert nz[0] > 0

    def test_json_export(self, rng):
        import json
        s = cdm_svd(build_cdm(random_joint(rng, 4, 3)))
        d = json.loads(s.to_json())
        assert d["nx"] == 4 and d["ny"] == 3
        assert len(d["psi_x"]) == 4 * 3


class TestMaxcorrFeatures:
    def test_two_by_two_sign_features(self, small_joint):
        s = cdm_svd(build_cdm(small_joint))
        fx, fy = maxcorr_features(s, 1)
        np.testing.assert_allclose(np.abs(fx.values), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.abs(fy.values), 1.0, atol=1e-12)
        corr = np.einsum('yx,x,y->', small_joint.table,
                         fx.values[:, 0], fy.values[:, 0])
        np.testing.assert_allclose(corr, 0.2, atol=1e-12)

    def test_gram_identity(self, rng):
        j = random_joint(rng, 7, 6)
        s = cdm_svd(build_cdm(j))
        fx, fy = maxcorr_features(s, 4)
        gram = (j.marginal_x.probs[:, None] * fx.values).T @ fx.values
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-9)
        cross = np.einsum('yx,xi,yj->ij', j.table, fx.values, fy.values)
        np.testing.assert_allclose(cross, np.diag(s.sigmas[:4]), atol=1e-9)

    def test_full_set_captures_frobenius(self, rng):
        j = random_joint(rng, 6, 5)
        c = build_cdm(j)
        s = cdm_svd(c)
        k = s.k_max - 1
        fx, fy = maxcorr_features(s, k)
        cross = np.einsum('yx,xi,yi->i', j.table, fx.values, fy.values)
        np.testing.assert_allclose(np.sum(cross ** 2), c.frob ** 2,
                                   atol=1e-9)

    def test_k_out_of_range(self, rng):
        s = cdm_svd(build_cdm(random_joint(rng, 4, 3)))
        with pytest.raises(InvalidInputError):
            maxcorr_features(s, 3)
        with pytest.raises(InvalidInputError):
            maxcorr_features(s, 0)


class TestAce:
    def test_rank_one_joint_fast_fixed_point(self, rng):
        px, py = FiniteDist.uniform(5), FiniteDist.uniform(4)
        j = joint_from_modes(px, py, [0.3], rng)
        res = ace(j, 1, tol=1e-12)
        s = cdm_svd(build_cdm(j))
        np.testing.assert_allclose(res.sigmas, s.sigmas[:1], atol=1e-10)
        # rank-1 power iteration lands after a couple of alternations
        assert res.iterations[0] <= 3

    def test_matches_svd_on_random_joint(self, rng):
        j = random_joint(rng, 8, 6)
        res = ace(j, 3, tol=1e-10)
        s = cdm_svd(build_cdm(j))
        np.testing.assert_allclose(res.sigmas, s.sigmas[:3], atol=1e-8)
        ang = principal_angles(res.features_x.xi, s.psi_x[:, :3])
        assert ang.max() <= 1e-6

    def test_degenerate_spectrum_subspace(self, rng):
        px, py = FiniteDist.uniform(6), FiniteDist.uniform(5)
        j = joint_from_modes(px, py, [0.25, 0.25, 0.1], rng)
        res = ace(j, 2, tol=1e-11)
        s = cdm_svd(build_cdm(j))
        # individual vectors are free inside the degenerate block; the
        # span is not
        ang = principal_angles(res.features_x.xi, s.psi_x[:, :2])
        assert ang.max() <= 1e-6

    def test_independent_joint_zero_modes(self):
        px, py = FiniteDist.uniform(4), FiniteDist.uniform(3)
        j = JointDist(np.outer(py.probs, px.probs))
        res = ace(j, 1)
        np.testing.assert_allclose(res.sigmas, 0.0, atol=1e-12)
        assert res.features_x.is_orthonormal()

    def test_max_iter_exceeded(self, rng):
        j = random_joint(rng, 8, 6)
        with pytest.raises(ConvergenceError) as exc:
            ace(j, 2, tol=1e-14, max_iter=2)
        assert exc.value.residual is not None

    def test_feature_moment_conditions(self, rng):
        j = random_joint(rng, 7, 5)
        res = ace(j, 3, tol=1e-11)
        px = j.marginal_x.probs
        vals = res.features_x.values
        np.testing.assert_allclose(px @ vals, 0.0, atol=1e-9)
        gram = (px[:, None] * vals).T @ vals
        np.testing.assert_allclose(gram, np.eye(3), atol=1e-9)


class TestMarkovTransport:
    def test_zero_maps_to_zero(self, rng):
        j = random_joint(rng, 5, 4)
        c = build_cdm(j)
        phi = InfoVector(j.marginal_y, np.zeros(4))
        out = markov_transport(c, phi)
        np.testing.assert_array_equal(out.phi, 0.0)

    def test_marginalization_oracle(self, rng):
        # build V-Y-X explicitly and compare the two routes to phi_x
        j = random_joint(rng, 6, 4)
        c = build_cdm(j)
        py = j.marginal_y
        n_v = 3
        cond_y = np.empty((n_v, 4))
        rng2 = np.random.default_rng(99)
        for v in range(n_v):
            d = rng2.standard_normal(4)
            d -= py.sqrt * (py.sqrt @ d)
            d *= 5e-3 / np.linalg.norm(d)
            cond_y[v] = py.probs + py.sqrt * d
        p_x_given_y = j.table.T / py.probs[None, :]       # |X| x |Y|
        for v in range(n_v):
            p_y_v = FiniteDist(cond_y[v])
            p_x_v = FiniteDist(p_x_given_y @ cond_y[v])
            phi_y = info_vector(p_y_v, py)
            direct = info_vector(p_x_v, j.marginal_x)
            via_cdm = markov_transport(c, phi_y)
            np.testing.assert_allclose(via_cdm.phi, direct.phi, atol=1e-10)
            assert abs(j.marginal_x.sqrt @ via_cdm.phi) <= 1e-12

    def test_singular_vectors_scale_by_sigma(self, rng):
        j = random_joint(rng, 6, 5)
        c = build_cdm(j)
        s = cdm_svd(c)
        for i in range(2):
            phi = InfoVector(j.marginal_y, s.psi_y[:, i])
            out = markov_transport(c, phi)
            np.testing.assert_allclose(out.phi, s.sigmas[i] * s.psi_x[:, i],
                                       atol=1e-10)

    def test_reference_mismatch(self, rng):
        j = random_joint(rng, 5, 4)
        c = build_cdm(j)
        other = FiniteDist.uniform(4)
        d = np.array([1.0, -1.0, 1.0, -1.0]) * 0.01
        d -= other.sqrt * (other.sqrt @ d)
        phi = InfoVector(other, d)
        with pytest.raises(InvalidInfoVectorError):
            markov_transport(c, phi)
