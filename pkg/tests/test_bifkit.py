import numpy as np
import pytest

from coinfect import bifkit, canonical_params
from coinfect.bifkit import (
    DegenerateSystem,
    asymptotic_scale,
    block_determinant,
    build_frame,
    complement_basis,
    ds_Qn,
    emergent_branch,
    emergent_branch_newton,
    neighborhood_scan,
    null_vectors,
    random_planted_system,
    sir_frame,
    small_eigenvalue_law,
    smallest_eigenvalue,
    transformed_jacobian,
    trivial_branch,
)
from coinfect.continuation import newton_correct
from coinfect.errors import (
    NotRankDeficient,
    NotSimpleKernel,
    OmegaVanishes,
    SingularLeadingBlock,
)
from coinfect.stability import coexistence_asymptotics, find_K0, omega_leading

TINY = dict(beta=(2.5e-7, 2.5e-7), gamma=(2.5e-7, 2.5e-7))


@pytest.fixture(scope="module")
def planted():
    sys = random_planted_system(np.random.default_rng(7))
    return sys, build_frame(sys)


@pytest.fixture(scope="module")
def sir():
    p = canonical_params(**TINY)
    K0 = find_K0(p).K0
    return p, K0, *sir_frame(p, K0)


class TestLinearAlgebra:
    def test_null_vectors(self):
        H = np.array([[1.0, 2.0], [2.0, 4.0]])
        e, theta = null_vectors(H)
        assert np.allclose(H @ e, 0, atol=1e-14) and np.allclose(theta @ H, 0, atol=1e-14)
        assert theta @ e == pytest.approx(1.0)
        assert np.linalg.norm(e) == pytest.approx(1.0) and e[np.argmax(np.abs(e))] > 0

    def test_full_rank_rejected(self):
        with pytest.raises(NotRankDeficient):
            null_vectors(np.eye(3))

    def test_double_kernel_rejected(self):
        with pytest.raises(NotSimpleKernel):
            null_vectors(np.diag([1.0, 0.0, 0.0]))

    def test_block_determinant(self):
        R = np.random.default_rng(1).normal(size=(5, 5))
        assert block_determinant(R) == pytest.approx(np.linalg.det(R))
        with pytest.raises(SingularLeadingBlock):
            block_determinant(np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_complement_basis(self):
        theta = np.array([1.0, 2.0, -1.0])
        B = complement_basis(theta)
        assert B.shape == (3, 2) and np.allclose(theta @ B, 0) and np.allclose(B.T @ B, np.eye(2))


class TestFrame:
    def test_omega_paths_agree(self, planted):
        _, fr = planted
        assert fr.omega == pytest.approx(fr.omega_det, rel=1e-10)

    def test_similarity_blocks(self, planted):
        _, fr = planted
        assert abs(fr.Q_blocks[3]) < 1e-12
        assert np.allclose(fr.Q_blocks[1], 0, atol=1e-12)
        assert np.allclose(fr.S_mat @ fr.S_inv, np.eye(fr.theta.size))

    def test_fd_matches_analytic_derivatives(self, planted):
        sys, fr = planted
        bare = DegenerateSystem(sys.F, sys.H, sys.x_star, sys.n)
        fr2 = build_frame(bare)
        assert fr2.omega == pytest.approx(fr.omega, rel=1e-6)

    def test_vanishing_omega(self):
        # y leaves F and H alone and H is independent of x: no transversality
        sys = DegenerateSystem(
            F=lambda x, y, s: x - s, H=lambda x, y, s: np.array([[0.0, 0.0], [0.0, 1.0]]) + 0 * s,
            x_star=np.array([0.0]), n=2)
        with pytest.raises(OmegaVanishes):
            build_frame(sys)


class TestBranches:
    def test_trivial_branch(self, planted):
        sys, _ = planted
        x = trivial_branch(sys, 1e-3)
        assert np.max(np.abs(sys.F(x, np.zeros(sys.n), 1e-3))) < 1e-12

    def test_emergent_branch_second_order(self, planted):
        sys, fr = planted
        dq = ds_Qn(sys, fr)
        sc = asymptotic_scale(fr, dq)
        errs = []
        for s in (2e-4 * sc, 1e-4 * sc):
            xp, yp = emergent_branch(sys, fr, s, dq)
            x, y = emergent_branch_newton(sys, fr, s)
            assert np.max(np.abs(sys.residual(x, y, s))) < 1e-11
            errs.append(max(np.max(np.abs(xp - x)), np.max(np.abs(yp - y))))
        assert 3 <= errs[0] / errs[1] <= 5

    def test_eigenvalue_law(self, planted):
        sys, fr = planted
        dq = ds_Qn(sys, fr)
        s = 1e-4 * asymptotic_scale(fr, dq)
        x, y = emergent_branch_newton(sys, fr, s)
        lam = smallest_eigenvalue(sys.jacobian(x, y, s)).real
        assert lam == pytest.approx(small_eigenvalue_law(sys, fr, s, dq), rel=1e-2)

    def test_transformed_jacobian_same_spectrum(self, planted):
        sys, fr = planted
        s = 1e-3
        x, y = emergent_branch_newton(sys, fr, s)
        a = np.sort_complex(np.linalg.eigvals(sys.jacobian(x, y, s)))
        b = np.sort_complex(np.linalg.eigvals(transformed_jacobian(sys, fr, x, y, s)))
        assert np.allclose(a, b, atol=1e-6)

    def test_only_two_roots_nearby(self, planted):
        sys, fr = planted
        roots = neighborhood_scan(sys, fr, 1e-3, radius=0.05, n_starts=200)
        assert len(roots) == 2
        assert any(np.max(np.abs(y)) < 1e-12 for _, y in roots)


class TestSIRInstance:
    def test_omega_matches_derived_law(self, sir):
        p, K0, _, fr = sir
        assert fr.omega == pytest.approx(omega_leading(p, K0), rel=1e-5)
        assert fr.omega == pytest.approx(fr.omega_det, rel=1e-10)

    def test_kernel_direction(self, sir):
        p, K0, _, fr = sir
        assert np.allclose(fr.theta, bifkit.sir_theta(p, K0))

    def test_emergent_point_matches_equilibrium(self, sir):
        p, K0, sys, fr = sir
        s = 1e-3 * K0
        x, y = emergent_branch_newton(sys, fr, s)
        bp = find_K0(p)
        rec, _ = newton_correct(p, K0 + s, coexistence_asymptotics(p, bp, K0 + s).state)
        assert np.allclose(np.concatenate([x, y]), rec.x, rtol=1e-8, atol=1e-14)

    def test_jacobian_is_model_jacobian(self, sir):
        from coinfect.model import jacobian_rhs

        p, K0, sys, _ = sir
        x = np.array([0.21, 0.09]); y = np.array([1e-4, 2e-3])
        J = sys.jacobian(x, y, 0.01)
        full = jacobian_rhs(p.with_K(K0 + 0.01), np.concatenate([x, y]))
        # (F, yH) is the model right-hand side, so both Jacobians coincide
        assert np.allclose(J, full, rtol=1e-12, atol=1e-14)
