import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ufslab.errors import (InvalidDistributionError, InvalidInputError,
                           SingularReferenceError)
from ufslab.prob import (FiniteDist, InfoVector, JointDist, chi_sq,
                         empirical_joint, info_vector, is_eps_dependent,
                         is_in_eps_neighborhood, kl, local_kl_approx)

from conftest import random_dist


class TestFiniteDist:
    def test_rejects_negative(self):
        with pytest.raises(InvalidDistributionError):
            FiniteDist(np.array([1.2, -0.2]))

    def test_rejects_bad_sum_without_renormalizing(self):
        with pytest.raises(InvalidDistributionError):
            FiniteDist(np.array([0.5, 0.4]))

    def test_rejects_nan(self):
        with pytest.raises(InvalidDistributionError):
            FiniteDist(np.array([np.nan, 1.0]))

    def test_uniform_and_flags(self):
        d = FiniteDist.uniform(4)
        assert d.strictly_positive
        assert d.n == 4
        z = FiniteDist(np.array([1.0, 0.0]))
        assert not z.strictly_positive

    def test_immutable(self):
        d = FiniteDist.uniform(3)
        with pytest.raises(ValueError):
            d.probs[0] = 0.5

    def test_smoothed(self):
        d = FiniteDist(np.array([1.0, 0.0]))
        s = d.smoothed(1e-3)
        assert s.strictly_positive
        np.testing.assert_allclose(s.probs.sum(), 1.0, atol=1e-15)

    def test_json_roundtrip(self, rng):
        d = random_dist(rng, 5)
        back = FiniteDist.from_json(d.to_json())
        np.testing.assert_array_equal(back.probs, d.probs)


class TestJointDist:
    def test_marginals_match_sums(self, small_joint):
        np.testing.assert_allclose(small_joint.marginal_x.probs, [0.5, 0.5])
        np.testing.assert_allclose(small_joint.marginal_y.probs, [0.5, 0.5])

    def test_rejects_bad_cached_marginals(self):
        with pytest.raises(InvalidDistributionError):
            JointDist(np.full((2, 2), 0.25),
                      marginal_x=FiniteDist(np.array([0.6, 0.4])))

    def test_json_roundtrip(self, rng):
        w = rng.random((3, 4))
        j = JointDist(w / w.sum())
        back = JointDist.from_json(j.to_json())
        np.testing.assert_array_equal(back.table, j.table)


class TestEmpiricalJoint:
    def test_two_point_count(self):
        j = empirical_joint([(0, 0), (1, 1)], 2, 2)
        np.testing.assert_array_equal(j.table, [[0.5, 0.0], [0.0, 0.5]])

    def test_degenerate_single_cell(self):
        j = empirical_joint([(0, 0)] * 7, 2, 3)
        assert j.table[0, 0] == 1.0
        assert j.table.sum() == 1.0

    def test_marginals_are_exact_frequencies(self, rng):
        pairs = np.column_stack([rng.integers(0, 3, 500),
                                 rng.integers(0, 4, 500)])
        j = empirical_joint(pairs, 3, 4)
        x_freq = np.bincount(pairs[:, 0], minlength=3) / 500
        y_freq = np.bincount(pairs[:, 1], minlength=4) / 500
        np.testing.assert_array_equal(j.marginal_x.probs, x_freq)
        np.testing.assert_array_equal(j.marginal_y.probs, y_freq)

    def test_large_sample_concentration(self):
        # fixed-seed sampling oracle: every cell within 3 binomial sigmas
        rng = np.random.default_rng(1234)
        w = rng.random((4, 5)) + 0.2
        true = JointDist(w / w.sum())
        n = 100_000
        flat = true.table.reshape(-1)
        idx = rng.choice(flat.size, size=n, p=flat)
        ys, xs = np.divmod(idx, true.nx)
        emp = empirical_joint(np.column_stack([xs, ys]), true.nx, true.ny)
        sigma = np.sqrt(true.table * (1 - true.table) / n)
        assert np.all(np.abs(emp.table - true.table) <= 3 * sigma)

    def test_out_of_range_symbol(self):
        with pytest.raises(IndexError):
            empirical_joint([(0, 5)], 2, 2)

    def test_empty_samples(self):
        with pytest.raises(InvalidInputError):
            empirical_joint([], 2, 2)


class TestInfoVector:
    def test_identity_case_is_zero(self, rng):
        d = random_dist(rng, 5)
        phi = info_vector(d, d)
        np.testing.assert_allclose(phi.phi, 0.0, atol=1e-15)

    def test_hand_case(self):
        ref = FiniteDist.uniform(2)
        p = FiniteDist(np.array([0.6, 0.4]))
        phi = info_vector(p, ref)
        np.testing.assert_allclose(
            phi.phi, [0.1 * np.sqrt(2), -0.1 * np.sqrt(2)], atol=1e-15)

    def test_orthogonal_to_sqrt_ref(self, rng):
        for _ in range(20):
            ref = random_dist(rng, 6)
            p = random_dist(rng, 6)
            phi = info_vector(p, ref)
            assert abs(ref.sqrt @ phi.phi) <= 1e-10

    def test_singular_reference(self):
        ref = FiniteDist(np.array([1.0, 0.0]))
        with pytest.raises(SingularReferenceError):
            info_vector(FiniteDist.uniform(2), ref)

    def test_rejects_non_orthogonal(self):
        from ufslab.errors import InvalidInfoVectorError
        with pytest.raises(InvalidInfoVectorError):
            InfoVector(FiniteDist.uniform(2), np.array([1.0, 0.0]))

    def test_feature_function_and_roundtrip(self, rng):
        ref = random_dist(rng, 4)
        p = random_dist(rng, 4)
        phi = info_vector(p, ref)
        np.testing.assert_allclose(phi.feature_function,
                                   phi.phi / ref.sqrt)
        np.testing.assert_allclose(phi.to_distribution().probs, p.probs,
                                   atol=1e-15)


class TestChiSq:
    def test_zero_at_reference(self, rng):
        d = random_dist(rng, 4)
        assert chi_sq(d, d) == 0.0
        assert is_in_eps_neighborhood(d, d, 1e-12)

    def test_hand_value(self):
        # (0.1^2)/0.5 per symbol, two symbols
        ref = FiniteDist.uniform(2)
        p = FiniteDist(np.array([0.6, 0.4]))
        assert math.isclose(chi_sq(p, ref), 0.04, rel_tol=0, abs_tol=1e-15)

    def test_equals_squared_info_vector(self, rng):
        for _ in range(25):
            ref = random_dist(rng, 7)
            p = random_dist(rng, 7)
            phi = info_vector(p, ref)
            assert abs(chi_sq(p, ref) - phi.norm ** 2) <= 1e-12

    @given(st.integers(2, 8).flatmap(lambda n: st.tuples(
        st.lists(st.floats(1e-3, 1.0), min_size=n, max_size=n),
        st.lists(st.floats(1e-3, 1.0), min_size=n, max_size=n))))
    @settings(max_examples=60, deadline=None)
    def test_chi_sq_identity_property(self, pair):
        p = FiniteDist.from_weights(np.asarray(pair[0]))
        ref = FiniteDist.from_weights(np.asarray(pair[1]))
        phi = info_vector(p, ref)
        assert abs(chi_sq(p, ref) - phi.norm ** 2) <= 1e-12
        assert abs(ref.sqrt @ phi.phi) <= 1e-10


class TestEpsDependence:
    def test_product_joint_always_dependent(self, rng):
        px = random_dist(rng, 3)
        py = random_dist(rng, 4)
        j = JointDist(np.outer(py.probs, px.probs))
        assert is_eps_dependent(j, 1e-12)

    def test_two_by_two_threshold(self, small_joint):
        # chi-square against the product of marginals is exactly 0.04
        assert is_eps_dependent(small_joint, 0.2 + 1e-12)
        assert not is_eps_dependent(small_joint, 0.2 - 1e-3)

    def test_singular_marginal(self):
        j = JointDist(np.array([[0.5, 0.5], [0.0, 0.0]]))
        with pytest.raises(SingularReferenceError):
            is_eps_dependent(j, 0.1)


class TestKl:
    def test_zero_on_equal(self, rng):
        d = random_dist(rng, 5)
        assert kl(d, d) == 0.0
        phi = info_vector(d, d)
        assert local_kl_approx(phi, phi) == 0.0

    def test_bernoulli_closed_form(self):
        p = FiniteDist(np.array([0.5, 0.5]))
        q = FiniteDist(np.array([0.6, 0.4]))
        expect = 0.5 * math.log(5 / 6) + 0.5 * math.log(5 / 4)
        assert math.isclose(kl(p, q), expect, rel_tol=1e-15)

    def test_support_violation_is_infinite(self):
        p = FiniteDist(np.array([0.5, 0.5]))
        q = FiniteDist(np.array([1.0, 0.0]))
        assert kl(p, q) == math.inf

    def test_local_approximation_sweep(self, rng):
        # fixed perturbation directions: error/eps^2 must vanish with eps;
        # keep the reference well inside the simplex so eps=0.1 stays valid
        ref = FiniteDist.from_weights(rng.random(5) + 1.0)
        d1 = rng.standard_normal(5)
        d2 = rng.standard_normal(5)
        for d in (d1, d2):
            d -= ref.sqrt * (ref.sqrt @ d)
        d1 /= np.linalg.norm(d1)
        d2 /= np.linalg.norm(d2)
        ratios = []
        for eps in (1e-1, 1e-2, 1e-3):
            p1 = FiniteDist(ref.probs + ref.sqrt * (eps * d1))
            p2 = FiniteDist(ref.probs + ref.sqrt * (eps * d2))
            exact = kl(p1, p2)
            local = local_kl_approx(info_vector(p1, ref),
                                    info_vector(p2, ref))
            err = abs(exact - local)
            if eps == 1e-2:
                assert err <= 10 * eps ** 3
            ratios.append(err / eps ** 2)
        assert ratios[0] > ratios[1] > ratios[2]
