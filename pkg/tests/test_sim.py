import numpy as np
import pytest

from coinfect import canonical_params
from coinfect.continuation import stable_point
from coinfect.equilibria import closed_form, derived_quantities
from coinfect.errors import NonConvergent, StepUnderflowODE
from coinfect.sim import TerminalFlag, integrate, settle


class TestIntegrate:
    def test_equilibrium_is_constant(self):
        p = canonical_params(K=1.5)
        tr = integrate(p, [1.5, 0, 0, 0, 0], 100.0)
        assert np.all(tr.states == tr.states[0])
        assert tr.terminal_flag is TerminalFlag.MAX_TIME

    def test_times_increase_and_states_nonnegative(self):
        p = canonical_params()
        tr = integrate(p, [0.9, 0.05, 0.02, 0.0, 0.0], 200.0)
        assert np.all(np.diff(tr.times) > 0) and np.all(tr.states >= 0)
        assert tr.times[-1] == 200.0

    def test_extinction_below_sigma1(self):
        p = canonical_params(K=0.15)
        tr = integrate(p, [0.1, 0.1, 0.1, 0.1, 0.1], 1e4)
        assert np.max(np.abs(tr.final.as_array()[:4] - [0.15, 0, 0, 0])) <= 1e-6

    def test_disease_free_invariance(self):
        tr = integrate(canonical_params(), [0.3, 0.0, 0.0, 0.0, 0.0], 50.0)
        assert np.all(tr.states[:, 1:] == 0.0)

    def test_reduced_face_invariance(self):
        p = canonical_params(beta=(1e-3, 0.0), gamma=(0.0, 0.0))
        tr = integrate(p, [0.5, 0.1, 0.0, 0.0, 0.0], 100.0)
        assert np.all(tr.states[:, 2:4] == 0.0)

    def test_self_convergence(self):
        p = canonical_params()
        x0 = [0.6, 0.05, 0.05, 0.05, 0.0]
        a = integrate(p, x0, 50.0, rtol=1e-8, atol=1e-12).final.as_array()
        b = integrate(p, x0, 50.0, rtol=5e-9, atol=1e-12).final.as_array()
        assert np.max(np.abs(a - b)) < 10 * 1e-8

    def test_perturbed_coexistence_returns(self):
        p = canonical_params(K=1.0)
        e = stable_point(p, 1.0)
        x0 = e.x + 1e-4 * np.random.default_rng(0).uniform(-1, 1, 4)
        tr = integrate(p, x0, 2000.0)
        assert np.max(np.abs(tr.final.as_array()[:4] - e.x)) <= 1e-6

    @pytest.mark.parametrize("x0", [[-1.0, 0, 0, 0], [1.0, np.nan, 0, 0], [1.0, 2.0]])
    def test_bad_initial_state(self, x0):
        with pytest.raises(ValueError):
            integrate(canonical_params(), x0, 1.0)

    def test_bad_tolerances(self):
        with pytest.raises(ValueError):
            integrate(canonical_params(), [1, 0, 0, 0], 1.0, rtol=0.0)

    def test_step_budget(self):
        with pytest.raises(StepUnderflowODE):
            integrate(canonical_params(), [0.5, 0.1, 0.1, 0.1], 1e4, max_steps=5)

    def test_csv(self, tmp_path):
        tr = integrate(canonical_params(), [1.0, 0.01, 0, 0, 0], 1.0)
        text = tr.to_csv(tmp_path / "t.csv", footer="done")
        lines = text.strip().split("\n")
        assert lines[0] == "t,S,I1,I2,I12,R" and lines[-1] == "# done"
        assert len(lines) == len(tr) + 2
        assert (tmp_path / "t.csv").read_text() == text


class TestSettle:
    def test_s4_settles_on_coexistence(self):
        p = canonical_params(K=2 * derived_quantities(canonical_params()).K(5))
        x = settle(p, [0.8, 0.05, 0.05, 0.05, 0.0], 1e7)
        e = stable_point(p, p.K)
        assert np.max(np.abs(np.array(x[:4]) - e.x)) < 1e-6

    def test_s1_settles_on_g100(self):
        p = canonical_params(eta=(3.0, 1.2), K=2.0)
        x = settle(p, [1.0, 0.05, 0.05, 0.05, 0.0], 1e7)
        assert np.max(np.abs(np.array(x[:4]) - closed_form(p, "G100", 2.0))) < 1e-6

    def test_disease_free_start(self):
        p = canonical_params(K=3.0)
        x = settle(p, [0.4, 0.0, 0.0, 0.0, 0.0], 1e6)
        assert x[:4] == pytest.approx((3.0, 0, 0, 0), abs=1e-9)

    def test_non_convergent(self):
        with pytest.raises(NonConvergent) as exc:
            settle(canonical_params(), [0.5, 0.1, 0.1, 0.1, 0.0], 1.0)
        assert exc.value.state is not None
