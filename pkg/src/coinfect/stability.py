"""Local stability, the ``det H`` criterion on ``G100`` and the bifurcation point ``K0``.

On the single-disease equilibrium ``G100`` the Jacobian is block triangular.
The ``(S, I1)`` block is always stable, so stability is decided by the 2x2
``(I2, I12)`` block ``H``: ``G100`` is stable exactly when ``det H > 0``.
``K0`` is the unique ``K > sigma1`` where ``det H`` changes sign. At ``K0``
the coexistence branch splits off.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .equilibria import (
    EquilibriumRecord,
    Stability,
    closed_form,
    derived_quantities,
    _record,
)
from .errors import MultipleRoots, NoBifurcation, NotAnEquilibrium
from .model import ValidatedParams, jacobian_rhs, rhs


class SmallnessWarning(UserWarning):
    """The coinfection constants are too large for the asymptotic statements."""


def smallness_ratio(p: ValidatedParams) -> float:
    """``(beta_bar + gamma_bar) / min(A1, A2, A3)``."""
    return p.coinfection_size / min(derived_quantities(p).A)


def check_smallness(p: ValidatedParams, limit: float = 0.01) -> bool:
    """Warn (and return False) when ``beta_bar + gamma_bar`` exceeds ``limit * min(A)``.

    No explicit constant is available for "sufficiently small", so this is
    only a heuristic.
    """
    ratio = smallness_ratio(p)
    if ratio > limit:
        warnings.warn(
            f"beta_bar + gamma_bar is {ratio:.3g} x min(A); asymptotic results may not apply",
            SmallnessWarning, stacklevel=3,
        )
        return False
    return True


def equilibrium_residual(p: ValidatedParams, x, K: float | None = None) -> float:
    q = p if K is None else p.with_K(K)
    return float(np.max(np.abs(rhs(q, np.asarray(x, dtype=float)[:4])[:4])))


def jacobian_at(p: ValidatedParams, e: EquilibriumRecord, tol: float = 1e-9) -> np.ndarray:
    """Analytic Jacobian at an equilibrium record (evaluated at ``e.K``).

    Raises:
        NotAnEquilibrium: if the residual at ``e`` exceeds ``tol * r``.
    """
    q = p.with_K(e.K)
    res = equilibrium_residual(q, e.x)
    if res > tol * p.r:
        raise NotAnEquilibrium(f"residual {res:.3g} at K={e.K:.6g} exceeds {tol * p.r:.3g}")
    return jacobian_rhs(q, e.x)


def eigenvalues(J: np.ndarray) -> np.ndarray:
    """Eigenvalues sorted by decreasing real part (LAPACK balancing + QR)."""
    ev = np.linalg.eigvals(J)
    return ev[np.argsort(-ev.real, kind="stable")]


def classify_stability(eigs, tol: float | None = None, r: float = 1.0) -> Stability:
    """Stable if every real part is below ``-tol``, Unstable if any exceeds ``tol``.

    ``tol`` defaults to ``1e-7 * r``.
    """
    tol = 1e-7 * r if tol is None else tol
    re = np.real(np.asarray(eigs))
    if np.all(re < -tol):
        return Stability.STABLE
    if np.any(re > tol):
        return Stability.UNSTABLE
    return Stability.MARGINAL


def classify_record(p: ValidatedParams, e: EquilibriumRecord, tol: float | None = None) -> EquilibriumRecord:
    """Return ``e`` with eigenvalues and a stability verdict attached."""
    ev = eigenvalues(jacobian_at(p, e))
    return e.with_stability(ev, classify_stability(ev, tol, p.r))


def _I1_g100(p: ValidatedParams, K: float) -> float:
    return p.r * (K - p.sigma[0]) / (K * p.alpha[0])


def H_matrix(p: ValidatedParams, K: float) -> np.ndarray:
    """The ``(I2, I12)`` block of the Jacobian at ``G100(K)``."""
    dq = derived_quantities(p)
    A1, _, A3 = dq.A
    a1 = p.alpha[0]
    s1 = p.sigma[0]
    I1 = _I1_g100(p, K)
    return np.array([
        [-p.r * A3 / a1 - p.gamma[1] * I1, p.beta[1] * s1],
        [p.gamma_bar * I1, -p.r * A1 / a1 + p.eta[0] * I1],
    ])


def det_H(p: ValidatedParams, K: float) -> float:
    """Stability determinant of ``G100(K)``; positive means stable (for ``K > sigma1``)."""
    dq = derived_quantities(p)
    A1, _, A3 = dq.A
    a1 = p.alpha[0]
    I1 = _I1_g100(p, K)
    return ((-p.r * A3 / a1 - p.gamma[1] * I1) * (-p.r * A1 / a1 + p.eta[0] * I1)
            - p.beta[1] * p.sigma[0] * p.gamma_bar * I1)


def det_H_roots_I1(p: ValidatedParams) -> np.ndarray:
    """Roots of ``det H`` viewed as a polynomial in ``I1*`` (ascending).

    ``det H = -gamma2 eta1 I^2 + (gamma2 b - a eta1 - c) I + a b`` with
    ``a = r A3/alpha1``, ``b = r A1/alpha1``, ``c = beta2 sigma1 gamma_bar``.
    """
    dq = derived_quantities(p)
    A1, _, A3 = dq.A
    a = p.r * A3 / p.alpha[0]
    b = p.r * A1 / p.alpha[0]
    c = p.beta[1] * p.sigma[0] * p.gamma_bar
    g2, e1 = p.gamma[1], p.eta[0]
    quad, lin, const = -g2 * e1, g2 * b - a * e1 - c, a * b
    if quad == 0.0:
        return np.array([-const / lin])
    disc = np.sqrt(lin * lin - 4 * quad * const)
    # cancellation-free pair
    q = -0.5 * (lin + np.copysign(disc, lin))
    return np.sort(np.array([q / quad, const / q]))


def K_from_I1(p: ValidatedParams, I1: float) -> float:
    """Invert ``I1 = r (K - sigma1) / (K alpha1)`` for ``K``."""
    return p.sigma[0] / (1.0 - p.alpha[0] * I1 / p.r)


def asymptotic_K0(p: ValidatedParams) -> float:
    """Limit of ``K0`` as the coinfection constants vanish: ``sigma1 eta1*/(eta1* - 1)``."""
    es1 = p.eta_star[0]
    return p.sigma[0] * es1 / (es1 - 1.0)


@dataclass(frozen=True)
class BifurcationPoint:
    K0: float
    ancestor: EquilibriumRecord
    small_eigenvalue: complex
    kernel_vector: np.ndarray
    asymptotic_K0: float
    eigenvalues: np.ndarray = field(repr=False)
    kernel_vector_full: np.ndarray = field(repr=False)
    margin: float = 0.0  # largest real part among the three other eigenvalues

    def to_json(self) -> str:
        return json.dumps({
            "K0": self.K0,
            "asymptotic_K0": self.asymptotic_K0,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "kernel_vector": [float(v) for v in self.kernel_vector],
        }, indent=2)


def K0_grid(p: ValidatedParams, n: int = 200) -> np.ndarray:
    """Geometric scan grid ``sigma1 (1 + 10**u)``, ``u`` in ``[-9, log10(999)]``."""
    return p.sigma[0] * (1.0 + np.logspace(-9.0, np.log10(999.0), n))


def find_K0(p: ValidatedParams, guard: bool = True) -> BifurcationPoint:
    """Locate the root of ``det H`` on ``(sigma1, inf)``.

    Raises:
        NoBifurcation: if ``eta1* < 1`` or ``det H`` keeps its sign on the scan.
        MultipleRoots: if the scan finds more than one sign change.
    """
    if p.eta_star[0] < 1:
        raise NoBifurcation(f"eta1* = {p.eta_star[0]:.6g} < 1: G100 never loses stability")
    if guard:
        check_smallness(p)
    grid = K0_grid(p)
    vals = np.array([det_H(p, K) for K in grid])
    flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if len(flips) == 0:
        raise NoBifurcation("det H has no sign change on (sigma1, 1000 sigma1]")
    if len(flips) > 1:
        raise MultipleRoots(f"det H changes sign {len(flips)} times")
    i = flips[0]
    K0 = brentq(lambda K: det_H(p, K), grid[i], grid[i + 1], xtol=1e-15 * grid[i], rtol=1e-14, maxiter=200)
    return _bifurcation_at(p, K0)


def _bifurcation_at(p: ValidatedParams, K0: float) -> BifurcationPoint:
    x = closed_form(p, "G100", K0)
    anc = _record(p, "G100", x, K0)
    J = jacobian_rhs(p.with_K(K0), x)
    ev = eigenvalues(J)
    k = int(np.argmin(np.abs(ev)))
    others = np.delete(ev, k)
    anc = anc.with_stability(ev, classify_stability(ev, None, p.r))
    Hm = H_matrix(p, K0)
    w = np.linalg.svd(Hm)[2][-1]
    w = w * np.sign(w[0] if w[0] != 0 else 1.0)
    v = np.linalg.svd(J)[2][-1]
    v = v * np.sign(v[3] if v[3] != 0 else 1.0)
    return BifurcationPoint(
        K0=float(K0), ancestor=anc, small_eigenvalue=complex(ev[k]), kernel_vector=w,
        asymptotic_K0=asymptotic_K0(p), eigenvalues=ev, kernel_vector_full=v,
        margin=float(np.max(others.real)),
    )


def printed_kernel_vector(p: ValidatedParams, K: float) -> np.ndarray:
    """The ``(I2, I12)`` kernel vector in its published form.

    ``(beta2 sigma1, r A3/alpha1 + gamma2 (1 - sigma1/K))``. The exact kernel of
    ``H`` has ``gamma2 I1* = gamma2 (r/alpha1)(1 - sigma1/K)`` in the second
    slot, so the two differ at order ``beta2 gamma2`` unless ``r = alpha1``.
    """
    A3 = derived_quantities(p).A[2]
    return np.array([p.beta[1] * p.sigma[0],
                     p.r * A3 / p.alpha[0] + p.gamma[1] * (1.0 - p.sigma[0] / K)])


def exact_kernel_vector(p: ValidatedParams, K: float) -> np.ndarray:
    """``(beta2 sigma1, r A3/alpha1 + gamma2 I1*)``, the kernel of ``H(K0)``."""
    A3 = derived_quantities(p).A[2]
    return np.array([p.beta[1] * p.sigma[0],
                     p.r * A3 / p.alpha[0] + p.gamma[1] * _I1_g100(p, K)])


# ---------------------------------------------------------------------------
# first-order behaviour of the coexistence branch near K0


def omega_printed(p: ValidatedParams, K0: float) -> float:
    """Transversality constant as published: ``alpha2 (s2-s1) r eta1^2 / (alpha1^2 s1 K0)``."""
    s1, s2, _ = p.sigma
    return p.alpha[1] * (s2 - s1) * p.r * p.eta[0] ** 2 / (p.alpha[0] ** 2 * s1 * K0)


def omega_leading(p: ValidatedParams, K0: float) -> float:
    """Leading-order transversality constant, ``alpha2 (s2-s1) r eta1^2 / (alpha1^2 K0)``.

    Normalized with ``theta = (beta2 sigma1, alpha2 (sigma2 - sigma1) + gamma2 I1*)``.
    Agrees with the generic construction in :mod:`coinfect.bifkit`; the
    published form carries an extra ``1/sigma1``.
    """
    s1, s2, _ = p.sigma
    return p.alpha[1] * (s2 - s1) * p.r * p.eta[0] ** 2 / (p.alpha[0] ** 2 * K0)


def lambda_slope_printed(p: ValidatedParams, K0: float) -> float:
    """Published slope of the small eigenvalue: ``-r sigma1 / (alpha1 K0^2)``."""
    return -p.r * p.sigma[0] / (p.alpha[0] * K0 ** 2)


def lambda_slope_leading(p: ValidatedParams, K0: float) -> float:
    """Leading-order slope ``-eta1 r sigma1 / (alpha1 K0^2)``.

    This is ``-d/dK`` of the ``(2,2)`` entry of ``H`` along ``G100``, which the
    eigenvalue follows to first order.
    """
    return p.eta[0] * lambda_slope_printed(p, K0)


def ratio_I2_I12(p: ValidatedParams) -> float:
    """Leading-order ``I2*/I12*`` on the emerging branch."""
    s1, s2, _ = p.sigma
    return p.beta[1] * s1 / (p.alpha[1] * (s2 - s1))


@dataclass(frozen=True)
class CoexistencePrediction:
    K: float
    state: np.ndarray
    small_eigenvalue: float
    I12_slope: float
    omega: float


def coexistence_asymptotics(p: ValidatedParams, bp: BifurcationPoint, K: float,
                            printed: bool = False) -> CoexistencePrediction:
    """First-order prediction of the coexistence equilibrium at ``K`` near ``K0``.

    ``S ~ sigma1``, ``I1 ~ r/(eta1* alpha1)``, ``I12`` linear in ``K - K0`` and
    ``I2 = ratio * I12``. With ``printed=True`` the published ``omega`` and
    eigenvalue slope are used instead of the leading-order ones.
    """
    dq = derived_quantities(p)
    A1, _, A3 = dq.A
    es1 = p.eta_star[0]
    K0 = bp.K0
    om = omega_printed(p, K0) if printed else omega_leading(p, K0)
    slope = p.r ** 2 * A1 * A3 * (es1 - 1.0) ** 2 / (es1 * p.mu[0] * p.alpha[0] * om)
    dK = K - K0
    I12 = slope * dK
    I2 = ratio_I2_I12(p) * I12
    lam = (lambda_slope_printed(p, K0) if printed else lambda_slope_leading(p, K0)) * dK
    state = np.array([p.sigma[0], p.r / (es1 * p.alpha[0]), I2, I12])
    return CoexistencePrediction(K=float(K), state=state, small_eigenvalue=lam,
                                 I12_slope=slope, omega=om)
