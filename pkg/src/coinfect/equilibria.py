"""Closed-form equilibria of the reduced system and the stable reference branch.

With ``beta = gamma = 0`` every equilibrium is explicit. They are named
``G<ijk>`` after the binary pattern of which of ``(I1, I2, I12)`` is nonzero.
``G000``, ``G100`` and ``G010`` stay exact for any ``beta``/``gamma``; the
others are exact only for the reduced system.

For fixed basic rates, the locally stable equilibria of the reduced system
form one continuous branch in ``K``. Its sequence of types is one of four
scenarios, fixed by ``eta1*`` and ``eta2*``.
"""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import InternalInvariantViolation
from .model import State, ValidatedParams, g_values, recovered_equilibrium

NAMES = ("O", "G000", "G100", "G010", "G001", "G101", "G011", "G111")

TYPE_CODES = {
    "O": (0, 0, 0), "G000": (0, 0, 0), "G100": (1, 0, 0), "G010": (0, 1, 0),
    "G001": (0, 0, 1), "G101": (1, 0, 1), "G011": (0, 1, 1), "G111": (1, 1, 1),
}

CSV_COLUMNS = ("K", "S", "I1", "I2", "I12", "type_code", "stability", "provenance")


class Provenance(str, Enum):
    CLOSED_FORM = "ClosedForm"
    NEWTON = "NewtonCorrected"


class Stability(str, Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"
    UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class DerivedQuantities:
    sigma: tuple[float, float, float]
    A: tuple[float, float, float]
    eta_star: tuple[float, float]
    delta_alpha: float
    delta_mu: float
    k_thresholds: tuple  # (K1, ..., K6); None where undefined
    alpha3_over_r: float = field(default=0.0, repr=False)

    def K(self, i: int) -> float | None:
        """Threshold ``K_i`` (1-based), or None when it is not defined."""
        return self.k_thresholds[i - 1]

    @property
    def s_coexist(self) -> float:
        """S-component of ``G111``: ``delta_mu / delta_alpha``."""
        return self.delta_mu / self.delta_alpha


@dataclass(frozen=True)
class ScenarioClass:
    name: str
    inequality: str

    @property
    def index(self) -> int:
        return int(self.name[1])


@dataclass(frozen=True)
class EquilibriumRecord:
    point: State
    type_code: tuple[int, int, int]
    K: float
    provenance: Provenance = Provenance.CLOSED_FORM
    eigenvalues: np.ndarray | None = field(default=None, compare=False)
    stability: Stability = Stability.UNCLASSIFIED
    label: str = ""

    @property
    def x(self) -> np.ndarray:
        """The ``(S, I1, I2, I12)`` block as an array."""
        return np.array(self.point[:4], dtype=float)

    @property
    def code_str(self) -> str:
        return "".join(str(c) for c in self.type_code)

    def with_stability(self, eigenvalues, stability: Stability) -> "EquilibriumRecord":
        return replace(self, eigenvalues=np.asarray(eigenvalues), stability=Stability(stability))

    def csv_row(self) -> dict:
        S, I1, I2, I12 = self.point[:4]
        return {
            "K": repr(float(self.K)), "S": repr(float(S)), "I1": repr(float(I1)),
            "I2": repr(float(I2)), "I12": repr(float(I12)), "type_code": self.code_str,
            "stability": Stability(self.stability).value,
            "provenance": Provenance(self.provenance).value,
        }


def type_threshold(p: ValidatedParams) -> float:
    """Components at or below this count as zero when reading off a type code."""
    return 1e-9 * p.r / p.alpha[0]


def type_code_of(p: ValidatedParams, x) -> tuple[int, int, int]:
    eps = type_threshold(p)
    return tuple(int(v > eps) for v in np.asarray(x, dtype=float)[1:4])


def derived_quantities(p: ValidatedParams) -> DerivedQuantities:
    """Everything computable from the basic rates without solving anything.

    Raises:
        InternalInvariantViolation: if one of the algebraic identities linking
            these quantities fails beyond rounding.
    """
    r = p.r
    s1, s2, s3 = p.sigma
    a1, a2, a3 = p.alpha
    m1, m2, _ = p.mu
    e1, e2 = p.eta
    A1 = a1 * a3 * (s3 - s1) / r
    A2 = a2 * a3 * (s3 - s2) / r
    A3 = a1 * a2 * (s2 - s1) / r
    es1, es2 = e1 / A1, e2 / A2
    da = a2 * e1 - a1 * e2
    dm = m2 * e1 - m1 * e2

    def ratio(es):
        return es / (es - 1.0)

    K1 = s1 * ratio(es1) if es1 > 1 else None
    K2 = s3 * ratio(es1) if es1 > 1 else None
    K3 = s2 * ratio(es2) if es2 > 1 else None
    K4 = s3 * ratio(es2) if es2 > 1 else None
    K5 = (dm / da) * ratio(es1) if (es1 > es2 and es1 > 1) else None
    K6 = (dm / da) * ratio(es2) if (es1 > es2 and es2 > 1) else None
    dq = DerivedQuantities(
        sigma=(s1, s2, s3), A=(A1, A2, A3), eta_star=(es1, es2),
        delta_alpha=da, delta_mu=dm, k_thresholds=(K1, K2, K3, K4, K5, K6),
        alpha3_over_r=a3 / r,
    )
    _check_identities(dq)
    return dq


def _check_identities(dq: DerivedQuantities) -> None:
    s1, s2, s3 = dq.sigma
    da, dm = dq.delta_alpha, dq.delta_mu
    es1, es2 = dq.eta_star
    scale = abs(dm) + abs(da) * s3
    if not (dm - s1 * da > -1e-12 * scale and dm - s2 * da > -1e-12 * scale):
        raise InternalInvariantViolation("delta_mu > sigma_i * delta_alpha fails")
    A1, A2, _ = dq.A
    lhs = es1 - es2
    rhs = (s3 * da - dm) * dq.alpha3_over_r / (A1 * A2)
    if abs(lhs - rhs) > 1e-12 * max(es1, es2, abs(lhs)):
        raise InternalInvariantViolation(f"eta1*-eta2* identity: {lhs!r} vs {rhs!r}")
    if es1 > es2:
        if not (da > 0 and s2 < dm / da < s3):
            raise InternalInvariantViolation("sigma2 < delta_mu/delta_alpha < sigma3 fails")
        K1, K2, K3, K4, K5, K6 = dq.k_thresholds
        if K5 is not None and not (K1 < K5 < K2):
            raise InternalInvariantViolation("K1 < K5 < K2 fails")
        if K6 is not None and not (K3 < K6 < K4):
            raise InternalInvariantViolation("K3 < K6 < K4 fails")


def closed_form(p: ValidatedParams, name: str, K: float | None = None) -> np.ndarray:
    """Evaluate the named closed-form equilibrium ``(S, I1, I2, I12)`` at ``K``.

    The formula is evaluated as written, so components can come out negative
    outside the range of ``K`` where the equilibrium exists.
    """
    K = p.K if K is None else float(K)
    r = p.r
    s1, s2, s3 = p.sigma
    a1, a2, a3 = p.alpha
    e1, e2 = p.eta
    if name == "O":
        return np.zeros(4)
    if name == "G000":
        return np.array([K, 0.0, 0.0, 0.0])
    if name == "G100":
        return np.array([s1, r * (K - s1) / (K * a1), 0.0, 0.0])
    if name == "G010":
        return np.array([s2, 0.0, r * (K - s2) / (K * a2), 0.0])
    if name == "G001":
        return np.array([s3, 0.0, 0.0, r * (K - s3) / (K * a3)])
    es1, es2 = p.eta_star
    if name == "G101":
        S = K * (1.0 - 1.0 / es1)
        return np.array([S, a3 / e1 * (s3 - S), 0.0, a1 / e1 * (S - s1)])
    if name == "G011":
        S = K * (1.0 - 1.0 / es2)
        return np.array([S, 0.0, a3 / e2 * (s3 - S), a2 / e2 * (S - s2)])
    if name == "G111":
        dq = derived_quantities(p)
        A1, A2, A3 = dq.A
        da, dm = dq.delta_alpha, dq.delta_mu
        u = 1.0 - dm / (K * da)
        return np.array([
            dm / da,
            r * A2 / da * (1.0 - es2 * u),
            r * A1 / da * (es1 * u - 1.0),
            r * A3 / da,
        ])
    raise KeyError(f"unknown equilibrium {name!r}")


def _record(p, name, x, K, stability=Stability.UNCLASSIFIED):
    R = recovered_equilibrium(p, x)
    return EquilibriumRecord(
        point=State(*(float(v) for v in x), R), type_code=TYPE_CODES[name], K=float(K),
        provenance=Provenance.CLOSED_FORM, stability=stability, label=name,
    )


def boundary_equilibria(p: ValidatedParams, K: float | None = None) -> list[EquilibriumRecord]:
    """All closed-form equilibria that are feasible at ``K``.

    A form is kept when every component is non-negative and each component its
    type marks as nonzero exceeds :func:`type_threshold`; infeasible forms are
    simply omitted. ``O`` is always listed and flagged unstable.
    """
    K = p.K if K is None else float(K)
    eps = type_threshold(p)
    out = [_record(p, "O", np.zeros(4), K, Stability.UNSTABLE)]
    for name in NAMES[1:]:
        if name == "G111" and p.eta_star[0] <= p.eta_star[1]:
            continue
        x = closed_form(p, name, K)
        if not np.all(np.isfinite(x)) or np.any(x < 0):
            continue
        code = TYPE_CODES[name]
        if x[0] <= eps or any(c and v <= eps for c, v in zip(code, x[1:])):
            continue
        out.append(_record(p, name, x, K))
    return out


def classify_scenario(p: ValidatedParams) -> ScenarioClass:
    """Which of the four stable-branch scenarios the basic rates select."""
    es1, es2 = p.eta_star
    if es1 < 1:
        return ScenarioClass("S1", "eta1* < 1")
    if es2 > es1:
        return ScenarioClass("S2", "eta2* > eta1* > 1")
    if es2 > 1:
        return ScenarioClass("S3", "eta1* > eta2* > 1")
    return ScenarioClass("S4", "eta1* > 1 > eta2*")


def reference_segments(p: ValidatedParams) -> list[tuple[float, float, str]]:
    """``(left, right, name)`` pieces of the stable branch, covering ``(0, inf)``."""
    s1 = p.sigma[0]
    dq = derived_quantities(p)
    K1, K2, _, K4, K5, K6 = dq.k_thresholds
    sc = classify_scenario(p).name
    inf = float("inf")
    if sc == "S1":
        cuts, names = [s1], ["G000", "G100"]
    elif sc == "S2":
        cuts, names = [s1, K1, K2], ["G000", "G100", "G101", "G001"]
    elif sc == "S3":
        cuts, names = [s1, K1, K5, K6, K4], ["G000", "G100", "G101", "G111", "G011", "G001"]
    else:
        cuts, names = [s1, K1, K5], ["G000", "G100", "G101", "G111"]
    edges = [0.0, *cuts, inf]
    return [(edges[i], edges[i + 1], names[i]) for i in range(len(names))]


def reference_name(p: ValidatedParams, K: float) -> str:
    segs = reference_segments(p)
    lefts = [s[0] for s in segs]
    return segs[bisect.bisect_right(lefts, K) - 1][2]


def reference_branch(p: ValidatedParams, K: float | None = None) -> EquilibriumRecord:
    """The point of the stable reference branch at ``K``.

    Segments are half-open ``[left, right)``; at a shared endpoint the two
    adjoining closed forms coincide.
    """
    K = p.K if K is None else float(K)
    name = reference_name(p, K)
    return _record(p, name, closed_form(p, name, K), K)


def branch_distance(p: ValidatedParams, K: float, x) -> float:
    """Max-norm distance from ``x`` to the reference branch at ``K``."""
    ref = reference_branch(p, K).x
    return float(np.max(np.abs(np.asarray(x, dtype=float)[:4] - ref)))


def transition_points(p: ValidatedParams) -> list[tuple[float, str, str]]:
    """``(K, from, to)`` for every type change along the reference branch."""
    segs = reference_segments(p)
    return [(segs[i][1], segs[i][2], segs[i + 1][2]) for i in range(len(segs) - 1)]


def g_residual(p: ValidatedParams, x, K: float | None = None) -> float:
    """Max-norm residual of the reduced equilibrium system at ``x``."""
    q = p if K is None else p.with_K(K)
    red = q.replace(gamma=(0.0, 0.0), beta=(0.0, 0.0))
    xx = np.asarray(x, dtype=float)[:4]
    g = g_values(red, xx)
    return float(np.max(np.abs(g * np.array([xx[0], xx[1], xx[2], xx[3]]))))


def records_to_csv(records, extra_columns=()) -> str:
    """CSV text with one row per record; ``extra_columns`` are dict keys to append."""
    buf = io.StringIO()
    cols = list(CSV_COLUMNS) + list(extra_columns)
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for rec in records:
        row = rec if isinstance(rec, dict) else rec.csv_row()
        w.writerow({k: row.get(k, "") for k in cols})
    return buf.getvalue()
