"""Continuation of the coexistence branch ``G*(K)`` for ``K > K0``.

The branch is traced with ``K`` itself as the parameter: a tangent predictor
followed by a damped Newton corrector. Every accepted point records its
eigenvalues, ``det J`` (with the ``A, B, C`` decomposition) and the
epsilon-pattern of its infected compartments.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import kernels
from .equilibria import (
    CSV_COLUMNS,
    TYPE_CODES,
    EquilibriumRecord,
    Provenance,
    ScenarioClass,
    Stability,
    State,
    branch_distance,
    classify_scenario,
    closed_form,
    derived_quantities,
    reference_name,
    type_code_of,
)
from .errors import (
    BoundsViolated,
    DegenerateComponents,
    HypothesisViolated,
    ImpossiblePattern,
    LeftPositiveOrthant,
    NewtonDiverged,
    NoBifurcation,
    StepUnderflow,
)
from .model import ValidatedParams, jacobian_rhs, recovered_equilibrium
from .stability import (
    BifurcationPoint,
    classify_stability,
    coexistence_asymptotics,
    eigenvalues,
    find_K0,
)

BOUND_SLACK = 1e-9


# ---------------------------------------------------------------------------
# corrector


def positivity_bounds(p: ValidatedParams) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper bounds every non-trivial equilibrium satisfies."""
    s1, _, s3 = p.sigma
    a1, a2, a3 = p.alpha
    lo = np.array([s1, 0.0, 0.0, 0.0])
    hi = np.array([s3, p.r / a1, p.r / a2, p.r / (a3 + p.beta_bar)])
    return lo, hi


def check_bounds(p: ValidatedParams, x, slack: float = BOUND_SLACK) -> bool:
    lo, hi = positivity_bounds(p)
    x = np.asarray(x, dtype=float)[:4]
    return bool(np.all(x >= lo - slack) and np.all(x <= hi + slack))


def newton_correct(p: ValidatedParams, K: float, guess, tol: float = 1e-12,
                   maxit: int = 50) -> tuple[EquilibriumRecord, int]:
    """Polish ``guess`` into an equilibrium at ``K``; returns ``(record, iterations)``.

    The residual bound is ``tol * r`` in the max norm.

    Raises:
        LeftPositiveOrthant: the guess or an iterate left the open orthant.
        NewtonDiverged: no convergence within ``maxit`` iterations.
        BoundsViolated: the root breaks the a-priori equilibrium bounds.
    """
    x0 = np.asarray(guess, dtype=float)[:4]
    if np.any(x0 <= 0):
        raise LeftPositiveOrthant(f"guess {x0} is not strictly positive")
    q = p.with_K(K)
    x, status, it, res = kernels.newton_one(q.to_vector(), x0, tol * p.r, maxit, True)
    if status == kernels.NEWTON_LEFT_ORTHANT:
        raise LeftPositiveOrthant(f"Newton left the positive orthant at K={K:.6g}")
    if status != kernels.NEWTON_CONVERGED:
        raise NewtonDiverged(f"Newton failed at K={K:.6g} (status {status}, residual {res:.3g})")
    if not check_bounds(p, x):
        raise BoundsViolated(f"root {x} at K={K:.6g} violates the equilibrium bounds")
    rec = EquilibriumRecord(
        point=State(*(float(v) for v in x), recovered_equilibrium(p, x)),
        type_code=type_code_of(p, x), K=float(K), provenance=Provenance.NEWTON,
        label="G*",
    )
    return rec, int(it)


def tangent(p: ValidatedParams, K: float, x) -> np.ndarray:
    """``dx/dK`` along the branch through ``x``; only ``S'`` depends on ``K``."""
    q = p.with_K(K)
    J = jacobian_rhs(q, x)
    dF = np.zeros(4)
    dF[0] = p.r * x[0] ** 2 / K ** 2
    return -np.linalg.solve(J, dF)


# ---------------------------------------------------------------------------
# det J decomposition


@dataclass(frozen=True)
class DetJDecomposition:
    det_J: float
    det_J_reconstructed: float
    A: float
    B: float
    C: float
    A1: float


def scaled_jacobian(p: ValidatedParams, K: float, x) -> np.ndarray:
    """Jacobian with row ``i`` divided by component ``i``, using the equilibrium relations.

    Its ``(2,2)`` and ``(3,3)`` entries are ``-beta1 S I12/I1^2`` and
    ``-beta2 S I12/I2^2``; ``det J = S I1 I2 I12 det`` of this matrix.
    """
    S, I1, I2, I12 = (float(v) for v in x[:4])
    a1, a2, a3 = p.alpha
    e1, e2 = p.eta
    g1, g2 = p.gamma
    b1, b2 = p.beta
    gb, bb = p.gamma_bar, p.beta_bar
    return np.array([
        [-p.r / K, -a1, -a2, -(bb + a3)],
        [a1 + b1 * I12 / I1, -b1 * S * I12 / I1 ** 2, -g1, -e1 + b1 * S / I1],
        [a2 + b2 * I12 / I2, -g2, -b2 * S * I12 / I2 ** 2, -e2 + b2 * S / I2],
        [a3, e1 + gb * I2 / I12, e2 + gb * I1 / I12, -gb * I1 * I2 / I12 ** 2],
    ])


def A1_sum(p: ValidatedParams, K: float, x) -> float:
    """The manifestly positive part of ``A``, summed term by term."""
    S, I1, I2, I12 = (float(v) for v in x[:4])
    a1, _, a3 = p.alpha
    e1 = p.eta[0]
    b1 = p.beta[0]
    g, be = p.gamma_bar, p.beta_bar
    return (b1 * a1 * a3 * S / I1
            + be * b1 * I12 / I1 * (e1 + g * I2 / I12)
            + be * a1 * g * I2 / I12
            + a3 * b1 * I12 / I1 * (e1 + g * I2 / I12)
            + a3 * a1 * g * I2 / I12
            + b1 * a3 * (be + a3) * S * I12 / I1 ** 2
            + a1 * g * I1 * I2 / I12 ** 2 * (a1 + b1 * I12 / I1))


def det_J_decomposed(p: ValidatedParams, e: EquilibriumRecord) -> DetJDecomposition:
    """``det J`` directly and as ``S I1 I2 I12 (beta2 S I12/I2^2 A + beta1 S I12/I1^2 B + C)``.

    ``det`` of the row-scaled Jacobian is multilinear in its two singular
    diagonal entries; ``A`` and ``B`` are (minus) the complementary principal
    minors and ``C`` is the determinant with both entries zeroed.

    The scaled matrix is ``diag(1/x) J`` rather than :func:`scaled_jacobian`.
    The two agree at an exact equilibrium, but the closed expressions divide
    the Newton residual by ``I1`` or ``I2``, which ruins the comparison when a
    component is tiny. The coefficients ``beta_i S I12 / I_i^2`` are read off
    the same matrix for the same reason.

    Raises:
        DegenerateComponents: if a component is too small for the ratios.
    """
    x = e.x
    if np.any(x < 1e-300):
        raise DegenerateComponents(f"component below 1e-300 at K={e.K:.6g}: {x}")
    K = e.K
    J = jacobian_rhs(p.with_K(K), x)
    M = J / x[:, None]
    M0 = M.copy()
    M0[1, 1] = 0.0
    M0[2, 2] = 0.0
    keep_a = [0, 1, 3]
    keep_b = [0, 2, 3]
    A = -np.linalg.det(M[np.ix_(keep_a, keep_a)])
    B = -np.linalg.det(M0[np.ix_(keep_b, keep_b)])
    C = np.linalg.det(M0)
    coef_a, coef_b = -M[2, 2], -M[1, 1]
    recon = np.prod(x) * (coef_a * A + coef_b * B + C)
    direct = float(np.linalg.det(J))
    return DetJDecomposition(det_J=direct, det_J_reconstructed=float(recon),
                             A=float(A), B=float(B), C=float(C), A1=A1_sum(p, K, x))


# ---------------------------------------------------------------------------
# epsilon classification


CASE_NEAREST = {"iv": "G001", "v": "G011", "vi": "G101", "vii": "G100", "viii": "G111"}
_PATTERN_CASE = {
    (0, 0, 0): "i", (0, 1, 0): "ii", (1, 1, 0): "iii", (0, 0, 1): "iv",
    (0, 1, 1): "v", (1, 0, 1): "vi", (1, 0, 0): "vii", (1, 1, 1): "viii",
}
ALLOWED_CASES = {
    "S1": frozenset(),
    "S2": frozenset({"vii", "vi", "iv"}),
    "S3": frozenset({"vii", "vi", "viii", "v", "iv"}),
    "S4": frozenset({"vii", "vi", "viii"}),
}


@dataclass(frozen=True)
class BoundaryClass:
    case: str
    eps: float
    nearest: str
    nearest_point: np.ndarray = field(repr=False)
    distance: float
    allowed: bool


def _case_conditions_hold(case: str, es1: float, es2: float) -> bool:
    if case == "iv":
        return es1 > 1 and es2 > 1
    if case == "v":
        return 1 < es2 < es1
    if case in ("vi", "vii"):
        return es1 > 1
    if case == "viii":
        return es1 > 1 and es1 > es2
    return False


def default_eps(p: ValidatedParams) -> float:
    return float(np.sqrt(p.coinfection_size))


def boundary_classify(p: ValidatedParams, e: EquilibriumRecord, eps: float | None = None) -> BoundaryClass:
    """Label a coexistence point by which of ``I1, I2, I12`` reach ``eps``.

    Raises:
        HypothesisViolated: ``beta_bar + gamma_bar > eps**2``.
        ImpossiblePattern: a pattern that cannot occur for a coexistence point,
            or one whose conditions on ``eta*`` fail for these parameters.
    """
    eps = default_eps(p) if eps is None else float(eps)
    if eps <= 0 or p.coinfection_size > eps * eps * (1 + 1e-12):
        raise HypothesisViolated(
            f"beta_bar + gamma_bar = {p.coinfection_size:.3g} exceeds eps^2 = {eps * eps:.3g}")
    pattern = tuple(int(v >= eps) for v in e.x[1:4])
    case = _PATTERN_CASE[pattern]
    if case not in CASE_NEAREST:
        raise ImpossiblePattern(f"case ({case}) at K={e.K:.6g}: pattern {pattern}", case=case)
    es1, es2 = p.eta_star
    if not _case_conditions_hold(case, es1, es2):
        raise ImpossiblePattern(
            f"case ({case}) at K={e.K:.6g} contradicts eta1*={es1:.4g}, eta2*={es2:.4g}", case=case)
    name = CASE_NEAREST[case]
    ref = closed_form(p, name, e.K)
    dist = float(np.max(np.abs(e.x - ref)))
    allowed = case in ALLOWED_CASES[classify_scenario(p).name]
    return BoundaryClass(case=case, eps=eps, nearest=name, nearest_point=ref,
                         distance=dist, allowed=allowed)


# ---------------------------------------------------------------------------
# branch


class EventKind(str, Enum):
    BIFURCATION_START = "BifurcationStart"
    TYPE_TRANSITION = "TypeTransition"
    STABILITY_CHANGE = "StabilityChange"
    DET_J_SIGN_ALERT = "DetJSignAlert"
    BOUNDARY_PROXIMITY = "BoundaryProximity"


class Event(NamedTuple):
    K: float
    kind: EventKind
    detail: str = ""


@dataclass
class StepControl:
    """Step-size policy for :func:`continue_branch`.

    Attributes:
        h_min_rel: smallest step as a fraction of ``K0``.
        n_min_steps: the largest step is ``(K_max - K0) / n_min_steps``.
        grow: factor applied after an easy corrector solve.
        easy_iters: corrector iterations counted as easy.
        max_corrector: largest accepted corrector move, relative to ``r/alpha1``.
        max_jump: largest change between consecutive records, relative to ``r/alpha1``.
        landmarks: land exactly on the thresholds ``K1..K6`` that lie ahead.
        eps: threshold for the boundary classification (default ``sqrt(beta_bar + gamma_bar)``).
        guard: warn when the coinfection constants look too large.
    """

    h_min_rel: float = 1e-6
    n_min_steps: int = 50
    grow: float = 1.5
    easy_iters: int = 4
    max_corrector: float = 2e-2
    max_jump: float = 5e-2
    landmarks: bool = True
    eps: float | None = None
    guard: bool = True


@dataclass(frozen=True)
class PointDiagnostics:
    det: DetJDecomposition | None
    boundary: BoundaryClass | None
    boundary_error: str = ""
    reference: str = ""
    reference_distance: float = float("nan")


@dataclass
class Branch:
    records: list[EquilibriumRecord]
    diagnostics: list[PointDiagnostics]
    events: list[Event]
    scenario: ScenarioClass
    K0: float
    bifurcation: BifurcationPoint | None = None
    complete: bool = True

    @property
    def K(self) -> np.ndarray:
        return np.array([r.K for r in self.records])

    @property
    def X(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    def events_of(self, kind: EventKind) -> list[Event]:
        return [ev for ev in self.events if ev.kind == kind]

    def max_reference_distance(self) -> float:
        return float(max(d.reference_distance for d in self.diagnostics))

    def csv_rows(self) -> list[dict]:
        rows = []
        for rec, d in zip(self.records, self.diagnostics):
            row = rec.csv_row()
            if d.det is not None:
                row.update(detJ=repr(d.det.det_J), A=repr(d.det.A), B=repr(d.det.B), C=repr(d.det.C))
            row["boundary_case"] = d.boundary.case if d.boundary else d.boundary_error
            row["reference"] = d.reference
            row["distance"] = repr(d.reference_distance)
            rows.append(row)
        return rows

    def to_csv(self) -> str:
        cols = list(CSV_COLUMNS) + ["detJ", "A", "B", "C", "boundary_case", "reference", "distance"]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in self.csv_rows():
            w.writerow({k: row.get(k, "") for k in cols})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "scenario": self.scenario.name,
            "K0": self.K0,
            "complete": self.complete,
            "events": [{"K": ev.K, "kind": ev.kind.value, "detail": ev.detail} for ev in self.events],
            "records": self.csv_rows(),
        }, indent=1)


def seed_offset(p: ValidatedParams, K0: float) -> float:
    """``max(1e-6 K0, 10 (beta_bar + gamma_bar) K0)``."""
    return max(1e-6 * K0, 10.0 * p.coinfection_size * K0)


def _landmarks(p: ValidatedParams, K0: float, K_max: float) -> list[float]:
    ks = [k for k in derived_quantities(p).k_thresholds if k is not None and K0 < k < K_max]
    return sorted(set(ks)) + [K_max]


def _diagnose(p, rec, eps):
    try:
        det = det_J_decomposed(p, rec)
    except DegenerateComponents:
        det = None
    try:
        bc, err = boundary_classify(p, rec, eps), ""
    except ImpossiblePattern as exc:
        bc, err = None, f"impossible({exc.case})"
    return PointDiagnostics(det=det, boundary=bc, boundary_error=err,
                            reference=reference_name(p, rec.K),
                            reference_distance=branch_distance(p, rec.K, rec.x))


def _classified(p, rec):
    ev = eigenvalues(jacobian_rhs(p.with_K(rec.K), rec.x))
    return rec.with_stability(ev, classify_stability(ev, None, p.r))


def continue_branch(p: ValidatedParams, K_max: float, opts: StepControl | None = None,
                    bp: BifurcationPoint | None = None) -> Branch:
    """Trace the coexistence branch from just above ``K0`` up to ``K_max``.

    Raises:
        NoBifurcation: when ``eta1* < 1``.
        ValueError: when ``K_max <= K0``.
        StepUnderflow: when the step falls below its floor; ``exc.branch``
            holds the points computed so far.
    """
    opts = opts or StepControl()
    bp = bp or find_K0(p, guard=opts.guard)
    K0 = bp.K0
    if not K_max > K0:
        raise ValueError(f"K_max = {K_max} must exceed K0 = {K0}")
    eps = default_eps(p) if opts.eps is None else opts.eps
    scale = p.r / p.alpha[0]
    h_min = opts.h_min_rel * K0
    h_max = (K_max - K0) / opts.n_min_steps
    branch = Branch(records=[], diagnostics=[], events=[Event(K0, EventKind.BIFURCATION_START)],
                    scenario=classify_scenario(p), K0=K0, bifurcation=bp)

    K = K0 + min(seed_offset(p, K0), 0.5 * (K_max - K0))
    guess = coexistence_asymptotics(p, bp, K).state
    rec, _ = newton_correct(p, K, guess)
    _append(p, branch, rec, eps)

    marks = _landmarks(p, K0, K_max) if opts.landmarks else [K_max]
    marks = [m for m in marks if m > K]
    h = min(h_max, max(h_min, K - K0))
    while K < K_max:
        x = rec.x
        t = tangent(p, K, x)
        target = min(m for m in marks if m > K)
        h_try = min(h, target - K)
        hit = h_try == target - K
        K_new = target if hit else K + h_try
        x_pred = x + h_try * t
        ok = False
        try:
            new, it = newton_correct(p, K_new, np.maximum(x_pred, 1e-3 * np.maximum(x, 1e-300)))
            moved = np.max(np.abs(new.x - x_pred))
            jump = np.max(np.abs(new.x - x))
            ok = moved <= opts.max_corrector * scale and jump <= opts.max_jump * scale
        except (NewtonDiverged, LeftPositiveOrthant, BoundsViolated):
            pass
        if not ok:
            h = 0.5 * h_try
            if h < h_min:
                branch.complete = False
                raise StepUnderflow(f"step underflow at K={K:.8g}", branch=branch)
            continue
        K, rec = K_new, new
        _append(p, branch, rec, eps)
        if it <= opts.easy_iters and not hit:
            h = min(h_max, h * opts.grow)
    return branch


def _append(p, branch: Branch, rec: EquilibriumRecord, eps: float) -> None:
    rec = _classified(p, rec)
    d = _diagnose(p, rec, eps)
    K = rec.K
    if branch.records:
        prev, pd = branch.records[-1], branch.diagnostics[-1]
        if rec.stability != prev.stability:
            branch.events.append(Event(K, EventKind.STABILITY_CHANGE,
                                       f"{prev.stability.value}->{rec.stability.value}"))
        a = pd.boundary.nearest if pd.boundary else pd.boundary_error
        b = d.boundary.nearest if d.boundary else d.boundary_error
        if a != b:
            branch.events.append(Event(K, EventKind.TYPE_TRANSITION, f"{a}->{b}"))
    if d.det is not None and not d.det.det_J > 0:
        branch.events.append(Event(K, EventKind.DET_J_SIGN_ALERT, f"det J = {d.det.det_J:.3g}"))
    if d.boundary is None or not d.boundary.allowed:
        what = d.boundary_error or f"case ({d.boundary.case}) not allowed"
        branch.events.append(Event(K, EventKind.BOUNDARY_PROXIMITY, what))
    branch.records.append(rec)
    branch.diagnostics.append(d)


# ---------------------------------------------------------------------------
# point queries

_LABELS = {code: name for name, code in TYPE_CODES.items() if name != "O"}


def stable_point(p: ValidatedParams, K: float, bp: BifurcationPoint | None = None) -> EquilibriumRecord:
    """The equilibrium the stable branch predicts at ``K``, with eigenvalues.

    Below ``sigma1`` this is ``G000``; up to ``K0`` (or for every ``K`` when
    there is no bifurcation) it is ``G100``, exact for any ``beta``/``gamma``.
    Past ``K0`` the coexistence branch is continued up to ``K``.
    """
    K = float(K)
    if K <= p.sigma[0]:
        name = "G000"
    else:
        name = "G100"
        if p.eta_star[0] > 1:
            bp = bp or find_K0(p)
            if K > bp.K0:
                rec = continue_branch(p, K, bp=bp).records[-1]
                return replace(rec, label=_LABELS[rec.type_code])
    x = closed_form(p, name, K)
    rec = EquilibriumRecord(
        point=State(*(float(v) for v in x), recovered_equilibrium(p, x)),
        type_code=TYPE_CODES[name], K=K, label=name,
    )
    return _classified(p, rec)


def known_equilibria(p: ValidatedParams, K: float | None = None) -> list[EquilibriumRecord]:
    """Equilibria available without a search: the exact boundary forms and the stable point.

    ``O``, ``G000``, ``G100`` and ``G010`` are exact for any ``beta``/``gamma``;
    infeasible ones are left out.
    """
    K = p.K if K is None else float(K)
    out = []
    for name in ("O", "G000", "G100", "G010"):
        x = np.zeros(4) if name == "O" else closed_form(p, name, K)
        if np.any(x < 0):
            continue
        out.append(EquilibriumRecord(
            point=State(*(float(v) for v in x), recovered_equilibrium(p, x)),
            type_code=TYPE_CODES[name], K=K, label=name,
        ))
    sp = stable_point(p, K)
    if all(np.max(np.abs(sp.x - e.x)) > 1e-12 for e in out):
        out.append(sp)
    return out


def nearest_equilibrium(p: ValidatedParams, x, K: float | None = None) -> tuple[EquilibriumRecord, float]:
    """``(record, max-norm distance)`` of the known equilibrium closest to ``x``."""
    xx = np.asarray(x, dtype=float)[:4]
    recs = known_equilibria(p, K)
    d = [float(np.max(np.abs(e.x - xx))) for e in recs]
    i = int(np.argmin(d))
    return recs[i], d[i]
