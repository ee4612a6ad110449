"""Time integration of the five-compartment system.

The integrator is an adaptive Dormand-Prince 4(5) pair living in the compiled
kernel (with a pure-Python twin). Accepted states are kept non-negative: a step
that dips below ``-1e-12`` is retried at half the size, and tiny negatives are
clipped to zero and counted.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import kernels
from .errors import NonConvergent, StepUnderflowODE
from .model import State, ValidatedParams

SETTLE_TOL = 1e-10
DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
MAX_STEPS = 2_000_000
CSV_COLUMNS = ("t", "S", "I1", "I2", "I12", "R")


class TerminalFlag(str, Enum):
    CONVERGED = "Converged"
    MAX_TIME = "MaxTimeReached"
    BLOWUP = "Blowup"


_FLAGS = {
    kernels.ODE_CONVERGED: TerminalFlag.CONVERGED,
    kernels.ODE_MAX_TIME: TerminalFlag.MAX_TIME,
    kernels.ODE_BLOWUP: TerminalFlag.BLOWUP,
}


@dataclass
class Trajectory:
    """Accepted integration steps.

    Attributes:
        times: Strictly increasing sample times, shape ``(n,)``.
        states: Non-negative states ``(S, I1, I2, I12, R)``, shape ``(n, 5)``.
        terminal_flag: Why the run stopped.
        n_clipped: Number of steps where a tiny negative component was zeroed.
    """

    times: np.ndarray
    states: np.ndarray
    terminal_flag: TerminalFlag
    n_clipped: int = 0

    @property
    def final(self) -> State:
        return State(*(float(v) for v in self.states[-1]))

    def __len__(self) -> int:
        return len(self.times)

    def csv_rows(self) -> list[list[float]]:
        return [[float(t), *(float(v) for v in x)] for t, x in zip(self.times, self.states)]

    def to_csv(self, path: str | Path | None = None, footer: str | None = None) -> str:
        """Write ``t,S,I1,I2,I12,R`` rows; ``footer`` lines are emitted as ``# ...`` comments."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.csv_rows():
            w.writerow([repr(v) for v in row])
        if footer:
            for line in footer.splitlines():
                buf.write(f"# {line}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _initial(x0) -> np.ndarray:
    x = np.asarray(x0, dtype=float)
    if x.shape == (4,):
        x = np.append(x, 0.0)
    if x.shape != (5,):
        raise ValueError(f"initial state needs 4 or 5 components, got shape {x.shape}")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ValueError(f"initial state must be finite and non-negative, got {x.tolist()}")
    return x


def _run(p, x0, t_end, rtol, atol, stop_tol, max_steps):
    if not (rtol > 0 and atol > 0):
        raise ValueError("rtol and atol must be positive")
    if not t_end > 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    times, states, flag, n_clip = kernels.dopri5(
        p.to_vector(), _initial(x0), 0.0, float(t_end), float(rtol), float(atol),
        0.0, float(stop_tol), int(max_steps),
    )
    if flag == kernels.ODE_STEP_UNDERFLOW:
        raise StepUnderflowODE(f"step size underflow at t={times[-1]:.6g}")
    if flag == kernels.ODE_MAX_STEPS:
        raise StepUnderflowODE(f"step budget of {max_steps} exhausted at t={times[-1]:.6g}")
    return Trajectory(np.asarray(times), np.asarray(states), _FLAGS[flag], int(n_clip))


def integrate(p: ValidatedParams, x0, t_end: float, rtol: float = DEFAULT_RTOL,
              atol: float = DEFAULT_ATOL, max_steps: int = MAX_STEPS) -> Trajectory:
    """Integrate from ``x0`` over ``[0, t_end]`` with K = ``p.K``.

    Args:
        x0: Four or five non-negative components; a missing ``R`` starts at 0.

    Raises:
        ValueError: Bad initial state or tolerances.
        StepUnderflowODE: The step size collapsed or the step budget ran out.
    """
    return _run(p, x0, t_end, rtol, atol, 0.0, max_steps)


def settle(p: ValidatedParams, x0, horizon: float, rtol: float = DEFAULT_RTOL,
           atol: float = DEFAULT_ATOL, tol: float = SETTLE_TOL) -> State:
    """Integrate until ``max|rhs| <= tol * r`` and return that state.

    Raises:
        NonConvergent: ``horizon`` reached first; ``.state`` is the last state.
        StepUnderflowODE: Integrator failure, including blow-up.
    """
    traj = _run(p, x0, horizon, rtol, atol, tol * p.r, MAX_STEPS)
    if traj.terminal_flag is TerminalFlag.CONVERGED:
        return traj.final
    if traj.terminal_flag is TerminalFlag.BLOWUP:
        raise StepUnderflowODE(f"integration blew up at t={traj.times[-1]:.6g}")
    raise NonConvergent(f"no steady state by t={horizon:g}", state=traj.final)
