import json
import warnings

import numpy as np
import pytest

from coinfect import canonical_params
from coinfect.equilibria import EquilibriumRecord, Stability, boundary_equilibria, closed_form
from coinfect.errors import NoBifurcation, NotAnEquilibrium
from coinfect.model import State, jacobian_rhs
from coinfect.oracle import fd_jacobian
from coinfect.stability import (
    H_matrix,
    K0_grid,
    K_from_I1,
    SmallnessWarning,
    asymptotic_K0,
    check_smallness,
    classify_record,
    classify_stability,
    coexistence_asymptotics,
    det_H,
    det_H_roots_I1,
    eigenvalues,
    exact_kernel_vector,
    find_K0,
    jacobian_at,
    lambda_slope_leading,
    lambda_slope_printed,
    omega_leading,
    omega_printed,
    printed_kernel_vector,
    ratio_I2_I12,
    smallness_ratio,
)
from coinfect.model import rhs


class TestClassification:
    def test_verdicts(self):
        assert classify_stability([-1.0, -2 + 1j, -2 - 1j]) is Stability.STABLE
        assert classify_stability([-1.0, 0.5]) is Stability.UNSTABLE
        assert classify_stability([-1.0, 1e-9]) is Stability.MARGINAL
        assert classify_stability([-1.0, -1e-9], tol=1e-12) is Stability.STABLE

    def test_tolerance_scales_with_r(self):
        assert classify_stability([-1e-6], r=100.0) is Stability.MARGINAL

    def test_eigenvalues_sorted(self):
        ev = eigenvalues(np.diag([-3.0, 1.0, -1.0, 0.0]))
        assert np.allclose(ev.real, [1.0, 0.0, -1.0, -3.0])

    def test_not_an_equilibrium(self):
        e = EquilibriumRecord(State(0.5, 0.1, 0.0, 0.0), (1, 0, 0), 1.0)
        with pytest.raises(NotAnEquilibrium):
            jacobian_at(canonical_params(), e)

    def test_disease_free_stable_below_sigma1(self):
        p = canonical_params()
        recs = {e.label: e for e in boundary_equilibria(p, 0.15)}
        assert classify_record(p, recs["G000"]).stability is Stability.STABLE
        recs = {e.label: e for e in boundary_equilibria(p, 0.3)}
        assert classify_record(p, recs["G000"]).stability is Stability.UNSTABLE
        assert classify_record(p, recs["G100"]).stability is Stability.STABLE

    def test_coexistence_jacobian_matches_oracle(self):
        p = canonical_params()
        bp = find_K0(p)
        from coinfect.continuation import stable_point
        e = stable_point(p, 1.0, bp)
        J = jacobian_rhs(p, e.x)
        Jfd = fd_jacobian(lambda v: rhs(p, v)[:4], e.x)
        assert np.max(np.abs(J - Jfd)) <= 1e-5 * np.max(np.abs(J))


class TestDetH:
    def test_H_is_jacobian_block(self):
        p = canonical_params()
        for K in (0.3, 0.5, 2.0):
            J = jacobian_rhs(p.with_K(K), closed_form(p, "G100", K))
            assert np.allclose(H_matrix(p, K), J[2:, 2:], rtol=1e-13, atol=1e-16)
            assert det_H(p, K) == pytest.approx(np.linalg.det(J[2:, 2:]), rel=1e-10)

    def test_roots_are_zeros(self):
        p = canonical_params()
        for I1 in det_H_roots_I1(p):
            if 0 < I1 < p.r / p.alpha[0]:
                assert abs(det_H(p, K_from_I1(p, I1))) < 1e-12

    def test_positive_without_bifurcation(self):
        p = canonical_params(eta=(3.0, 1.2))
        Ks = p.sigma[0] * (1 + np.logspace(-9, 6, 400))
        assert all(det_H(p, K) > 0 for K in Ks)

    def test_grid(self):
        g = K0_grid(canonical_params())
        assert g[0] == pytest.approx(0.2 * (1 + 1e-9)) and g[-1] == pytest.approx(200.0)


class TestK0:
    def test_canonical(self):
        bp = find_K0(canonical_params())
        assert bp.K0 == pytest.approx(0.4, rel=1e-6)
        assert bp.asymptotic_K0 == pytest.approx(0.4)
        assert abs(bp.small_eigenvalue) < 1e-10
        assert bp.margin < 0
        assert bp.ancestor.label == "G100"
        assert json.loads(bp.to_json())["K0"] == bp.K0

    def test_no_bifurcation(self):
        with pytest.raises(NoBifurcation):
            find_K0(canonical_params(eta=(4.0, 1.2)))

    def test_stability_swaps_at_K0(self):
        p = canonical_params()
        K0 = find_K0(p).K0
        assert det_H(p, 0.99 * K0) > 0 > det_H(p, 1.01 * K0)

    def test_smallness_guard(self):
        p = canonical_params(beta=(0.2, 0.2))
        assert smallness_ratio(p) > 0.01
        with pytest.warns(SmallnessWarning):
            assert not check_smallness(p)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert check_smallness(canonical_params())

    def test_asymptotic_formula(self):
        assert asymptotic_K0(canonical_params(eta=(13.5, 1.2))) == pytest.approx(0.3)


class TestKernelVectors:
    def test_exact_kernel(self):
        p = canonical_params()
        K0 = find_K0(p).K0
        w = exact_kernel_vector(p, K0)
        assert np.max(np.abs(H_matrix(p, K0) @ w)) <= 1e-12 * np.linalg.norm(w)

    def test_published_kernel_off_by_beta_gamma(self):
        p = canonical_params()
        K0 = find_K0(p).K0
        w = printed_kernel_vector(p, K0)
        res = np.max(np.abs(H_matrix(p, K0) @ w))
        assert 0 < res <= 10 * p.beta[1] * p.gamma[1]

    def test_published_kernel_exact_when_r_equals_alpha1(self):
        p = canonical_params(r=5.0, mu=(1.0, 1.2, 1.5), eta=(45.0, 6.0))
        K0 = find_K0(p, guard=False).K0
        assert np.allclose(printed_kernel_vector(p, K0), exact_kernel_vector(p, K0), rtol=1e-14)


class TestAsymptotics:
    def test_published_and_leading_constants(self):
        p = canonical_params()
        K0 = 0.4
        assert omega_leading(p, K0) == pytest.approx(3.24)
        assert omega_printed(p, K0) == pytest.approx(3.24 / 0.2)
        assert lambda_slope_printed(p, K0) == pytest.approx(-0.25)
        assert lambda_slope_leading(p, K0) == pytest.approx(-2.25)

    def test_ratio(self):
        assert ratio_I2_I12(canonical_params()) == pytest.approx(1e-3 * 0.2 / 0.4)

    def test_prediction_near_K0(self):
        p = canonical_params(beta=(1e-6, 1e-6), gamma=(1e-6, 1e-6))
        bp = find_K0(p)
        pred = coexistence_asymptotics(p, bp, bp.K0 * 1.001)
        assert pred.state[0] == pytest.approx(0.2)
        assert pred.state[1] == pytest.approx(0.1)
        assert pred.state[2] / pred.state[3] == pytest.approx(ratio_I2_I12(p))
        assert pred.small_eigenvalue < 0
        assert coexistence_asymptotics(p, bp, bp.K0 * 1.001, printed=True).omega == pytest.approx(pred.omega / 0.2)
