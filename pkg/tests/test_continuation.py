import json

import numpy as np
import pytest

from coinfect import canonical_params
from coinfect.continuation import (
    ALLOWED_CASES,
    EventKind,
    StepControl,
    A1_sum,
    boundary_classify,
    check_bounds,
    continue_branch,
    default_eps,
    det_J_decomposed,
    known_equilibria,
    nearest_equilibrium,
    newton_correct,
    scaled_jacobian,
    stable_point,
    tangent,
)
from coinfect.equilibria import EquilibriumRecord, Stability, closed_form, derived_quantities
from coinfect.errors import (
    HypothesisViolated,
    ImpossiblePattern,
    LeftPositiveOrthant,
    NoBifurcation,
    StepUnderflow,
)
from coinfect.model import State, jacobian_rhs, rhs
from coinfect.stability import coexistence_asymptotics, find_K0
from paramsets import scenario_sets

SMALL = dict(beta=(2.5e-5, 2.5e-5), gamma=(2.5e-5, 2.5e-5))


@pytest.fixture(scope="module")
def s4():
    p = canonical_params(**SMALL)
    return p, continue_branch(p, 40 * find_K0(p).K0)


@pytest.fixture(scope="module")
def s3():
    p = canonical_params(eta=(9.0, 3.6), **SMALL)
    return p, continue_branch(p, 100 * find_K0(p).K0)


class TestCorrector:
    def test_converges_from_asymptotic_guess(self):
        p = canonical_params()
        bp = find_K0(p)
        K = bp.K0 + 0.05
        rec, it = newton_correct(p, K, coexistence_asymptotics(p, bp, K).state)
        assert np.all(rec.x > 0) and it < 20
        assert np.max(np.abs(rhs(p.with_K(K), rec.x)[:4])) <= 1e-12
        assert rec.label == "G*" and rec.provenance.value == "NewtonCorrected"

    def test_rejects_non_positive_guess(self):
        with pytest.raises(LeftPositiveOrthant):
            newton_correct(canonical_params(), 1.0, [0.3, 0.1, 0.0, 0.1])

    def test_bounds(self):
        p = canonical_params()
        assert check_bounds(p, [0.3, 0.1, 0.1, 0.1])
        assert not check_bounds(p, [0.6, 0.1, 0.1, 0.1])

    def test_tangent_matches_central_difference(self, s4):
        p, b = s4
        r0 = b.records[len(b.records) // 2]
        h = 1e-6 * r0.K
        xp, _ = newton_correct(p, r0.K + h, r0.x)
        xm, _ = newton_correct(p, r0.K - h, r0.x)
        fd = (xp.x - xm.x) / (2 * h)
        assert np.allclose(tangent(p, r0.K, r0.x), fd, rtol=1e-5, atol=1e-8)


class TestDetJ:
    def test_decomposition_reconstructs(self, s4):
        p, b = s4
        for rec in b.records[::10]:
            d = det_J_decomposed(p, rec)
            assert d.det_J == pytest.approx(np.linalg.det(jacobian_rhs(p.with_K(rec.K), rec.x)), rel=1e-10)
            assert d.det_J_reconstructed == pytest.approx(d.det_J, rel=1e-8)
            assert d.A1 > 0

    def test_A1_sum_agrees(self, s4):
        p, b = s4
        rec = b.records[len(b.records) // 2]
        assert A1_sum(p, rec.K, rec.x) == pytest.approx(det_J_decomposed(p, rec).A1, rel=1e-6)

    def test_scaled_jacobian_rows(self, s4):
        p, b = s4
        rec = b.records[-1]
        M = scaled_jacobian(p, rec.K, rec.x)
        J = jacobian_rhs(p.with_K(rec.K), rec.x)
        assert np.allclose(M, J / rec.x[:, None], rtol=1e-6, atol=1e-9)

    def test_C_limit(self):
        p = canonical_params(beta=(1e-8, 1e-8), gamma=(1e-8, 1e-8))
        dq = derived_quantities(p)
        d = det_J_decomposed(p, stable_point(p, 2 * dq.K(5)))
        assert d.C == pytest.approx(dq.delta_alpha ** 2, rel=1e-5)


class TestBoundaryClassification:
    def _rec(self, x, K=1.0):
        return EquilibriumRecord(State(*x), (1, 1, 1), K)

    def test_cases(self):
        p = canonical_params(**SMALL)
        eps = default_eps(p)
        assert eps == pytest.approx(1e-2)
        bc = boundary_classify(p, self._rec([0.32, 0.05, 0.07, 0.06]))
        assert bc.case == "viii" and bc.nearest == "G111" and bc.allowed
        bc = boundary_classify(p, self._rec([0.21, 0.09, 1e-5, 0.006]))
        assert bc.case == "vii" and bc.nearest == "G100"

    def test_hypothesis_violated(self):
        p = canonical_params()
        with pytest.raises(HypothesisViolated):
            boundary_classify(p, self._rec([0.3, 0.1, 0.1, 0.1]), eps=1e-3)

    def test_impossible_patterns(self):
        p = canonical_params(**SMALL)
        with pytest.raises(ImpossiblePattern) as exc:
            boundary_classify(p, self._rec([0.3, 1e-4, 0.1, 1e-4]))
        assert exc.value.case == "ii"
        with pytest.raises(ImpossiblePattern, match="eta"):
            boundary_classify(p, self._rec([0.3, 1e-4, 0.1, 0.1]))

    def test_allowed_sets(self):
        assert ALLOWED_CASES["S1"] == frozenset()
        assert ALLOWED_CASES["S4"] < ALLOWED_CASES["S3"]


class TestBranch:
    def test_s4_branch(self, s4):
        p, b = s4
        assert b.complete and b.scenario.name == "S4"
        assert np.all(np.diff(b.K) > 0)
        assert b.records[0].K > b.K0
        assert all(r.stability is Stability.STABLE for r in b.records)
        assert not b.events_of(EventKind.DET_J_SIGN_ALERT)
        assert b.events[0].kind is EventKind.BIFURCATION_START
        assert np.all(b.X > 0)

    def test_s4_transitions(self, s4):
        _, b = s4
        kinds = [e.detail for e in b.events_of(EventKind.TYPE_TRANSITION)]
        assert kinds == ["G100->G101", "G101->G111"]

    def test_s3_transitions(self, s3):
        p, b = s3
        dq = derived_quantities(p)
        ev = b.events_of(EventKind.TYPE_TRANSITION)
        assert [e.detail for e in ev] == ["G100->G101", "G101->G111", "G111->G011", "G011->G001"]
        # a component has to cross eps, so events trail the thresholds by O(eps)
        for e, K in zip(ev, (dq.K(1), dq.K(5), dq.K(6), dq.K(4))):
            assert abs(e.K - K) / K < 0.2
        assert not b.events_of(EventKind.BOUNDARY_PROXIMITY)

    def test_landmarks_hit(self, s3):
        p, b = s3
        dq = derived_quantities(p)
        for i in (5, 6, 4):
            assert np.any(np.abs(b.K - dq.K(i)) <= 1e-12 * dq.K(i))

    def test_close_to_reference(self, s3):
        p, b = s3
        assert b.max_reference_distance() <= 5 * default_eps(p) * p.r / p.alpha[0]

    def test_exports(self, s4):
        _, b = s4
        lines = b.to_csv().strip().split("\n")
        assert lines[0].endswith(",detJ,A,B,C,boundary_case,reference,distance")
        assert len(lines) == len(b.records) + 1
        data = json.loads(b.to_json())
        assert data["scenario"] == "S4" and data["events"][0]["kind"] == "BifurcationStart"

    def test_no_bifurcation(self):
        with pytest.raises(NoBifurcation):
            continue_branch(canonical_params(eta=(4.0, 1.2)), 10.0)

    def test_k_max_below_K0(self):
        with pytest.raises(ValueError):
            continue_branch(canonical_params(), 0.3)

    def test_step_underflow_keeps_partial_branch(self):
        p = canonical_params(**SMALL)
        with pytest.raises(StepUnderflow) as exc:
            continue_branch(p, 10.0, StepControl(max_corrector=1e-12, h_min_rel=1e-3))
        assert exc.value.branch is not None and not exc.value.branch.complete
        assert len(exc.value.branch.records) >= 1

    @pytest.mark.parametrize("sc", ["S2", "S3", "S4"])
    def test_random_sets_stay_stable(self, sc):
        for p in scenario_sets(sc, 3, 5, 1e-4):
            b = continue_branch(p, 50 * find_K0(p).K0)
            assert all(d.det.det_J > 0 for d in b.diagnostics)
            assert all(r.stability is Stability.STABLE for r in b.records)


class TestPointQueries:
    def test_stable_point_segments(self):
        p = canonical_params()
        assert stable_point(p, 0.1).label == "G000"
        assert stable_point(p, 0.3).label == "G100"
        e = stable_point(p, 2.0)
        assert e.label == "G111" and e.stability is Stability.STABLE
        assert np.max(np.abs(rhs(p.with_K(2.0), e.x)[:4])) <= 1e-12

    def test_stable_point_without_bifurcation(self):
        p = canonical_params(eta=(4.0, 1.2))
        assert np.allclose(stable_point(p, 5.0).x, closed_form(p, "G100", 5.0))

    def test_nearest(self):
        p = canonical_params()
        rec, d = nearest_equilibrium(p, [1.0, 0, 0, 0], K=1.0)
        assert rec.label == "G000" and d == 0.0
        labels = {e.label for e in known_equilibria(p, 1.0)}
        assert labels == {"O", "G000", "G100", "G010", "G111"}
