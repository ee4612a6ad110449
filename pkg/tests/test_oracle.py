import numpy as np
import pytest

from coinfect import canonical_params
from coinfect.equilibria import boundary_equilibria, derived_quantities
from coinfect.model import rhs
from coinfect.oracle import dedup, fd_jacobian, grid_equilibria, interior_roots, seed_box, sobol_seeds


class TestFiniteDifferences:
    def test_identity(self):
        x = np.array([0.3, -2.0, 5.0])
        assert np.allclose(fd_jacobian(lambda v: v, x), np.eye(3), atol=1e-12)

    def test_linear_map(self):
        M = np.random.default_rng(0).normal(size=(4, 3))
        assert np.allclose(fd_jacobian(lambda v: M @ v, np.ones(3)), M, atol=1e-10)

    def test_step_scaling(self):
        # a cubic has central-difference error h^2 = (h_scale (1+|x|))^2
        J = fd_jacobian(lambda v: v ** 3, np.array([100.0]), h_scale=1e-3)
        assert J[0, 0] == pytest.approx(3e4 + (1e-3 * 101) ** 2, rel=1e-9)


class TestGrid:
    def test_seeds_in_box(self):
        p = canonical_params()
        lo, hi = seed_box(p)
        s = sobol_seeds(p, 1000, 1)
        assert s.shape == (1000, 4) and np.all(s >= lo) and np.all(s <= hi)
        assert np.array_equal(s, sobol_seeds(p, 1000, 1))

    def test_reduced_s3_matches_closed_forms(self):
        p = canonical_params(eta=(9.0, 3.6), beta=(0.0, 0.0), gamma=(0.0, 0.0))
        dq = derived_quantities(p)
        K = 0.5 * (dq.K(5) + dq.K(6))
        found = grid_equilibria(p, K, 4000)
        expected = boundary_equilibria(p, K)
        assert {e.label for e in found} == {e.label for e in expected}
        for e in expected:
            assert min(np.max(np.abs(f.x - e.x)) for f in found) < 1e-9

    def test_no_interior_root_without_bifurcation(self):
        p = canonical_params(eta=(4.0, 1.2))
        assert interior_roots(grid_equilibria(p, 2.0, 2000)) == []

    def test_single_interior_root_past_K0(self):
        roots = interior_roots(grid_equilibria(canonical_params(), 1.0, 2000))
        assert len(roots) == 1

    def test_residuals_and_dedup(self):
        p = canonical_params()
        recs = grid_equilibria(p, 1.0, 1000)
        X = np.array([e.x for e in recs])
        assert all(np.max(np.abs(rhs(p, x)[:4])) <= 1e-10 * p.r for x in X)
        assert np.array_equal(dedup(X), X)
        assert len(dedup(np.vstack([X, X + 1e-9]))) == len(X)
