"""Bifurcation from a trivial branch for partially degenerate equilibrium systems.

The systems handled here have the form

    F(x, y; s) = 0,    y H(x, y; s) = 0,

with ``x`` in R^m, a row vector ``y`` in R^n and a scalar parameter ``s``.
``y = 0`` is the trivial branch. ``A_hat = D_x F(x*, 0; 0)`` is invertible
and ``H_hat = H(x*, 0; 0)`` has a simple zero eigenvalue, so a second
branch leaves the trivial one at ``s = 0``. Its first-order direction
is ``theta``, the left null vector of ``H_hat``, and its speed is set by the
transversality constant ``omega``.

The SIR instance (:func:`sir_system`) takes ``x = (S, I1)``,
``y = (I2, I12)`` and ``s = K - K0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    NewtonDiverged,
    NormalizationImpossible,
    NotRankDeficient,
    NotSimpleKernel,
    OmegaVanishes,
    SingularLeadingBlock,
    TrivialBranchLost,
)

FD_STEP = 1e-6


def _central(f, v: np.ndarray, h_scale: float = FD_STEP) -> np.ndarray:
    """Central differences of ``f`` w.r.t. each entry of ``v``; derivative index is last."""
    v = np.asarray(v, dtype=float)
    cols = []
    for j in range(v.size):
        h = h_scale * (1.0 + abs(v[j]))
        vp, vm = v.copy(), v.copy()
        vp[j] += h
        vm[j] -= h
        cols.append((np.asarray(f(vp)) - np.asarray(f(vm))) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class DegenerateSystem:
    """``F(x, y; s) = 0``, ``y H(x, y; s) = 0`` around ``(x*, 0; 0)``.

    ``dF`` and ``dH`` are optional analytic derivatives:
    ``dF(x, y, s) -> (DxF (m,m), DyF (m,n), dsF (m,))`` and
    ``dH(x, y, s) -> (DxH (n,n,m), DyH (n,n,n), dsH (n,n))`` with the
    differentiation index last. Central differences are used otherwise.
    """

    F: Callable
    H: Callable
    x_star: np.ndarray
    n: int
    dF: Callable | None = None
    dH: Callable | None = None

    @property
    def m(self) -> int:
        return int(np.asarray(self.x_star).size)

    def _y0(self) -> np.ndarray:
        return np.zeros(self.n)

    def derivs_F(self, x, y, s):
        x, y = np.asarray(x, float), np.asarray(y, float)
        if self.dF is not None:
            return tuple(np.asarray(a, float) for a in self.dF(x, y, s))
        return (_central(lambda v: self.F(v, y, s), x),
                _central(lambda v: self.F(x, v, s), y),
                _central(lambda v: self.F(x, y, v[0]), np.array([s]))[..., 0])

    def derivs_H(self, x, y, s):
        x, y = np.asarray(x, float), np.asarray(y, float)
        if self.dH is not None:
            return tuple(np.asarray(a, float) for a in self.dH(x, y, s))
        return (_central(lambda v: self.H(v, y, s), x),
                _central(lambda v: self.H(x, v, s), y),
                _central(lambda v: self.H(x, y, v[0]), np.array([s]))[..., 0])

    def residual(self, x, y, s) -> np.ndarray:
        """The stacked vector ``(F, yH)``."""
        y = np.asarray(y, float)
        return np.concatenate([np.asarray(self.F(x, y, s), float), y @ np.asarray(self.H(x, y, s), float)])

    def jacobian(self, x, y, s) -> np.ndarray:
        """Jacobian of ``(F, yH)`` with respect to ``(x, y)``."""
        y = np.asarray(y, float)
        DxF, DyF, _ = self.derivs_F(x, y, s)
        DxH, DyH, _ = self.derivs_H(x, y, s)
        Hm = np.asarray(self.H(x, y, s), float)
        top = np.hstack([DxF, DyF])
        bx = np.einsum("i,ikj->kj", y, DxH)
        by = Hm.T + np.einsum("i,ikl->kl", y, DyH)
        return np.vstack([top, np.hstack([bx, by])])


def null_vectors(H_hat: np.ndarray, tol: float = 1e-10, gap: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """Right and left null vectors ``(e_hat, theta)`` with ``theta e_hat^T = 1``.

    ``e_hat`` has unit length and a positive largest entry; ``theta`` carries
    the normalization.

    Raises:
        NotRankDeficient: smallest singular value above ``tol * ||H||``.
        NotSimpleKernel: second smallest singular value below ``gap * ||H||``.
        NormalizationImpossible: ``theta e_hat^T`` vanishes (defective kernel).
    """
    H_hat = np.atleast_2d(np.asarray(H_hat, dtype=float))
    n = H_hat.shape[0]
    U, sv, Vt = np.linalg.svd(H_hat)
    norm = sv[0]
    if sv[-1] > tol * norm:
        raise NotRankDeficient(f"smallest singular value {sv[-1]:.3g} vs norm {norm:.3g}")
    if n > 1 and (sv[-2] == 0.0 or sv[-2] < gap * norm):
        raise NotSimpleKernel(f"second singular value {sv[-2]:.3g} vs norm {norm:.3g}")
    e = Vt[-1].copy()
    e *= np.sign(e[np.argmax(np.abs(e))])
    theta = U[:, -1].copy()
    d = float(theta @ e)
    if abs(d) < 1e-8:
        raise NormalizationImpossible(f"theta . e_hat = {d:.3g}")
    return e, theta / d


def block_determinant(R: np.ndarray) -> float:
    """``det R = (R22 - R21 R11^{-1} R12) det R11`` for the split at ``N - 1``.

    ``R12`` is the last column above the corner and ``R21`` the last row left of it.

    Raises:
        SingularLeadingBlock: the leading ``(N-1) x (N-1)`` block is singular.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    N = R.shape[0]
    if N == 1:
        return float(R[0, 0])
    R11, R12, R21, R22 = R[:-1, :-1], R[:-1, -1], R[-1, :-1], R[-1, -1]
    d11 = np.linalg.det(R11)
    if d11 == 0.0 or np.linalg.cond(R11) > 1e14:
        raise SingularLeadingBlock("leading block is singular")
    return float((R22 - R21 @ np.linalg.solve(R11, R12)) * d11)


@dataclass(frozen=True)
class BifurcationFrame:
    e_hat: np.ndarray
    theta: np.ndarray
    S_mat: np.ndarray
    S_inv: np.ndarray
    Lambda: np.ndarray
    Q_blocks: tuple
    omega: float
    omega_det: float
    A_hat: np.ndarray = field(repr=False)
    H_hat: np.ndarray = field(repr=False)
    grad_x_Qn: np.ndarray = field(repr=False)
    dF_dzn: np.ndarray = field(repr=False)
    dQn_dzn: float = 0.0

    @property
    def e_n(self) -> np.ndarray:
        e = np.zeros(self.theta.size)
        e[-1] = 1.0
        return e

    def Q(self, sys: DegenerateSystem, x, y, s) -> np.ndarray:
        return self.S_inv @ np.asarray(sys.H(x, y, s), float) @ self.S_mat

    def Qn(self, sys: DegenerateSystem, x, y, s) -> float:
        """``theta H e_hat^T``, the corner entry of ``Q``."""
        return float(self.theta @ np.asarray(sys.H(x, y, s), float) @ self.e_hat)


def complement_basis(theta: np.ndarray) -> np.ndarray:
    """Orthonormal columns spanning ``{v : theta v = 0}``."""
    theta = np.asarray(theta, float)
    _, _, Vt = np.linalg.svd(theta[None, :])
    return Vt[1:].T


def build_frame(sys: DegenerateSystem, theta_hint: np.ndarray | None = None,
                tol: float = 1e-10, gap: float = 1e-4) -> BifurcationFrame:
    """Null vectors, the similarity ``S``, the blocks of ``Q`` and ``omega``.

    ``omega`` is computed twice: as ``-det(calA)/det(A_hat)`` and as
    ``grad_x Qn A_hat^{-1} dF/dz_n - dQn/dz_n``. Both depend on the scale of
    ``theta``; ``theta_hint`` (any vector parallel to the left null vector)
    fixes that scale.

    Raises:
        SingularLeadingBlock: ``A_hat`` is singular.
        OmegaVanishes: transversality fails.
    """
    xs = np.asarray(sys.x_star, float)
    H_hat = np.asarray(sys.H(xs, sys._y0(), 0.0), float)
    n = H_hat.shape[0]
    y0 = np.zeros(n)
    e, theta = null_vectors(H_hat, tol, gap)
    if theta_hint is not None:
        hint = np.asarray(theta_hint, float)
        theta = hint
        d = float(theta @ e)
        if abs(d) < 1e-8 * np.linalg.norm(hint):
            raise NormalizationImpossible("theta_hint is orthogonal to the kernel")
        e = e / d
    S = np.column_stack([complement_basis(theta), e])
    S_inv = np.linalg.inv(S)
    Lam = S_inv @ H_hat @ S
    blocks = (Lam[:-1, :-1], Lam[:-1, -1], Lam[-1, :-1], Lam[-1, -1])

    DxF, DyF, _ = sys.derivs_F(xs, y0, 0.0)
    DxH, DyH, _ = sys.derivs_H(xs, y0, 0.0)
    A_hat = DxF
    if np.linalg.cond(A_hat) > 1e14:
        raise SingularLeadingBlock("A_hat = D_x F(x*, 0; 0) is singular")
    grad_x_Qn = np.einsum("i,ijk,j->k", theta, DxH, e)
    dF_dzn = DyF @ theta
    dQn_dzn = float(np.einsum("i,ijl,j,l->", theta, DyH, e, theta))
    omega = float(grad_x_Qn @ np.linalg.solve(A_hat, dF_dzn) - dQn_dzn)
    calA = np.block([[A_hat, dF_dzn[:, None]], [grad_x_Qn[None, :], np.array([[dQn_dzn]])]])
    omega_det = float(-block_determinant(calA) / np.linalg.det(A_hat))
    scale = (np.linalg.norm(grad_x_Qn) * np.linalg.norm(np.linalg.inv(A_hat)) * np.linalg.norm(dF_dzn)
             + abs(dQn_dzn))
    if abs(omega) <= 1e-10 * max(scale, 1e-300):
        raise OmegaVanishes(f"omega = {omega:.3g} vanishes relative to {scale:.3g}")
    return BifurcationFrame(
        e_hat=e, theta=theta, S_mat=S, S_inv=S_inv, Lambda=Lam, Q_blocks=blocks,
        omega=omega, omega_det=omega_det, A_hat=A_hat, H_hat=H_hat,
        grad_x_Qn=grad_x_Qn, dF_dzn=dF_dzn, dQn_dzn=dQn_dzn,
    )


# ---------------------------------------------------------------------------
# branches


def _newton(fun, jac, v0, tol=1e-13, maxit=60):
    v = np.asarray(v0, float).copy()
    for _ in range(maxit):
        f = fun(v)
        if not np.all(np.isfinite(f)):
            break
        dv = np.linalg.solve(jac(v), -f)
        v += dv
        if np.max(np.abs(dv)) <= tol * (1.0 + np.max(np.abs(v))):
            return v
    raise NewtonDiverged("Newton did not converge")


def trivial_branch(sys: DegenerateSystem, s: float, x0=None) -> np.ndarray:
    """``x_hat(s)`` with ``F(x_hat(s), 0; s) = 0``, by Newton from ``x*``.

    Raises:
        TrivialBranchLost: Newton fails.
    """
    y0 = sys._y0()
    start = np.asarray(sys.x_star if x0 is None else x0, float)
    try:
        return _newton(lambda x: np.asarray(sys.F(x, y0, s), float),
                       lambda x: sys.derivs_F(x, y0, s)[0], start)
    except (NewtonDiverged, np.linalg.LinAlgError) as exc:
        raise TrivialBranchLost(f"trivial branch lost at s={s:.3g}") from exc


def ds_Qn(sys: DegenerateSystem, frame: BifurcationFrame, h: float = FD_STEP) -> float:
    """``d/ds Qn(x_hat(s), 0; s)`` at ``s = 0`` by central differences."""
    y0 = sys._y0()
    qp = frame.Qn(sys, trivial_branch(sys, h), y0, h)
    qm = frame.Qn(sys, trivial_branch(sys, -h), y0, -h)
    return (qp - qm) / (2 * h)


def emergent_branch(sys: DegenerateSystem, frame: BifurcationFrame, s: float,
                    dq: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """First-order point ``(x(s), y(s))`` of the bifurcating branch.

    ``y(s) = (ds Qn / omega) s theta`` and ``x(s) = x* + s x'``, where
    ``A_hat x' = -(ds F + D_y F theta^T ds Qn/omega)``.
    """
    dq = ds_Qn(sys, frame) if dq is None else dq
    zn_dot = dq / frame.omega
    xs = np.asarray(sys.x_star, float)
    _, _, dsF = sys.derivs_F(xs, sys._y0(), 0.0)
    x_dot = -np.linalg.solve(frame.A_hat, dsF + frame.dF_dzn * zn_dot)
    return xs + s * x_dot, zn_dot * s * frame.theta


def reduced_system(sys: DegenerateSystem, frame: BifurcationFrame, s: float):
    """The augmented equations in ``(x, z)`` whose nonzero-``z_n`` root is the emergent branch.

    ``F(x, z S^{-1}; s) = 0``, ``z~ Q~ + z_n Q_r = 0`` and
    ``Q_n - Q_r Q~^{-1} Q_c = 0``.
    """
    m = sys.m
    Sinv = frame.S_inv

    def fun(v):
        x, z = v[:m], v[m:]
        y = z @ Sinv
        Q = frame.Q(sys, x, y, s)
        Qt, Qc, Qr, Qn = Q[:-1, :-1], Q[:-1, -1], Q[-1, :-1], Q[-1, -1]
        eq_z = z[:-1] @ Qt + z[-1] * Qr
        schur = Qn - Qr @ np.linalg.solve(Qt, Qc) if Qt.size else Qn
        return np.concatenate([np.asarray(sys.F(x, y, s), float), eq_z, [schur]])

    return fun


def emergent_branch_newton(sys: DegenerateSystem, frame: BifurcationFrame, s: float,
                           guess=None, _depth: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Fully corrected emergent-branch point, used as the reference for the expansion.

    When Newton fails from the first-order guess, the point at ``s/2`` is
    solved first and extrapolated linearly to ``s``.
    """
    if guess is None:
        guess = emergent_branch(sys, frame, s)
    x0, y0 = guess
    v0 = np.concatenate([x0, np.asarray(y0) @ frame.S_mat])
    fun = reduced_system(sys, frame, s)
    m = sys.m
    try:
        v = _newton(fun, lambda v: _central(fun, v, 1e-7), v0, tol=1e-14)
    except (NewtonDiverged, np.linalg.LinAlgError):
        if _depth >= 12:
            raise
        xh, yh = emergent_branch_newton(sys, frame, 0.5 * s, _depth=_depth + 1)
        xs = np.asarray(sys.x_star, float)
        return emergent_branch_newton(sys, frame, s, (2 * xh - xs, 2 * yh), _depth + 1)
    return v[:m], v[m:] @ frame.S_inv


def small_eigenvalue_law(sys: DegenerateSystem, frame: BifurcationFrame, s: float,
                         dq: float | None = None) -> float:
    """Predicted small eigenvalue ``-ds Qn * s`` on the emergent branch."""
    dq = ds_Qn(sys, frame) if dq is None else dq
    return -dq * s


def smallest_eigenvalue(J: np.ndarray) -> complex:
    ev = np.linalg.eigvals(J)
    return complex(ev[np.argmin(np.abs(ev))])


def transformed_jacobian(sys: DegenerateSystem, frame: BifurcationFrame, x, y, s) -> np.ndarray:
    """Jacobian of ``(F(x, z S^{-1}), z Q)`` in ``(x, z)`` by central differences.

    It equals ``diag(I, S^T) J diag(I, S^{-T})`` for the Jacobian ``J`` of
    ``(F, yH)``, so the two share their eigenvalues.
    """
    m = sys.m
    z0 = np.asarray(y, float) @ frame.S_mat

    def G(v):
        xx, z = v[:m], v[m:]
        yy = z @ frame.S_inv
        return np.concatenate([np.asarray(sys.F(xx, yy, s), float), z @ frame.Q(sys, xx, yy, s)])

    return _central(G, np.concatenate([np.asarray(x, float), z0]))


# ---------------------------------------------------------------------------
# uniqueness scan


def neighborhood_scan(sys: DegenerateSystem, frame: BifurcationFrame, s: float, radius: float,
                      n_starts: int = 400, seed: int = 0, dedup: float = 1e-8) -> list[tuple[np.ndarray, np.ndarray]]:
    """Distinct roots of ``(F, yH) = 0`` reached from random starts near ``(x*, 0)``.

    Starts fill the box ``|x - x*| <= radius``, ``|y| <= radius``. Inside the
    uniqueness neighborhood only the trivial and the emergent roots should
    appear.
    """
    rng = np.random.default_rng(seed)
    m, n = sys.m, frame.theta.size
    xs = np.asarray(sys.x_star, float)
    roots: list[np.ndarray] = []
    fun = lambda v: sys.residual(v[:m], v[m:], s)  # noqa: E731
    jac = lambda v: sys.jacobian(v[:m], v[m:], s)  # noqa: E731
    for _ in range(n_starts):
        v0 = np.concatenate([xs + radius * rng.uniform(-1, 1, m), radius * rng.uniform(-1, 1, n)])
        try:
            v = _newton(fun, jac, v0, maxit=40)
        except (NewtonDiverged, np.linalg.LinAlgError):
            continue
        if np.max(np.abs(fun(v))) > 1e-10 or np.max(np.abs(v[:m] - xs)) > 2 * radius or np.max(np.abs(v[m:])) > 2 * radius:
            continue
        if not any(np.max(np.abs(v - r)) <= dedup * (1 + np.max(np.abs(r))) for r in roots):
            roots.append(v)
    return [(v[:m], v[m:]) for v in roots]


# ---------------------------------------------------------------------------
# instances


def random_planted_system(rng: np.random.Generator, m: int = 3, n: int = 4,
                          nonlinear: float = 0.3, min_omega: float = 0.1,
                          max_tries: int = 1000) -> DegenerateSystem:
    """A random smooth system with a planted simple kernel of ``H_hat``.

    ``H_hat = P diag(d_1, ..., d_{n-1}, 0) P^{-1}`` with ``|d_i| >= 0.5`` and a
    well-conditioned ``P``; the remaining dependence on ``(x, y, s)`` is
    linear plus a small quadratic term. Draws whose ``|omega|`` (with unit
    ``theta``) is below ``min_omega`` are rejected as nearly non-transversal.
    """
    for _ in range(max_tries):
        sys = _planted_draw(rng, m, n, nonlinear)
        fr = build_frame(sys)
        if abs(fr.omega) * np.linalg.norm(fr.e_hat) * np.linalg.norm(fr.theta) >= min_omega * np.linalg.norm(fr.theta) ** 2:
            return sys
    raise RuntimeError("could not draw a transversal system")


def asymptotic_scale(frame: BifurcationFrame, dq: float) -> float:
    """``min(1, |omega / ds Qn|)``: the ``s`` scale at which ``y(s)`` is of order one."""
    return min(1.0, abs(frame.omega / dq)) if dq else 1.0


def _planted_draw(rng, m, n, nonlinear):
    x_star = rng.normal(size=m)
    A = rng.normal(size=(m, m)) + 3 * np.eye(m)
    By = rng.normal(size=(m, n))
    cs = rng.normal(size=m)
    Cq = nonlinear * rng.normal(size=(m, m))
    Q_, _ = np.linalg.qr(rng.normal(size=(n, n)))
    P = Q_ @ np.diag(rng.uniform(1.0, 2.0, n))
    d = rng.uniform(0.5, 2.0, n - 1) * rng.choice([-1.0, 1.0], n - 1)
    H0 = P @ np.diag(np.append(d, 0.0)) @ np.linalg.inv(P)
    Hx = rng.normal(size=(n, n, m))
    Hy = rng.normal(size=(n, n, n))
    Hs = rng.normal(size=(n, n))
    Hq = nonlinear * rng.normal(size=(n, n))

    def F(x, y, s):
        dx = np.asarray(x) - x_star
        return A @ dx + By @ np.asarray(y) + cs * s + Cq @ (dx * dx) + nonlinear * s * s * cs

    def H(x, y, s):
        dx = np.asarray(x) - x_star
        y = np.asarray(y)
        return H0 + Hx @ dx + Hy @ y + Hs * s + Hq * (dx @ dx + s * s)

    def dF(x, y, s):
        dx = np.asarray(x) - x_star
        return A + 2 * Cq * dx[None, :], By, cs + 2 * nonlinear * s * cs

    def dH(x, y, s):
        dx = np.asarray(x) - x_star
        DxH = Hx + 2 * Hq[:, :, None] * dx[None, None, :]
        return DxH, Hy, Hs + 2 * s * Hq

    return DegenerateSystem(F=F, H=H, x_star=x_star, n=n, dF=dF, dH=dH)


def sir_system(p, K0: float) -> DegenerateSystem:
    """The coinfection equilibrium equations in bifurcation form around ``G100(K0)``.

    ``x = (S, I1)``, ``y = (I2, I12)``, ``s = K - K0``. Analytic derivatives
    are supplied.
    """
    r = p.r
    a1, a2, a3 = p.alpha
    m1, m2, m3 = p.mu
    e1, e2 = p.eta
    g1, g2 = p.gamma
    b1, b2 = p.beta
    gb, bb = p.gamma_bar, p.beta_bar
    s1 = p.sigma[0]
    x_star = np.array([s1, r * (K0 - s1) / (a1 * K0)])

    def F(x, y, s):
        K = K0 + s
        x1, x2 = x
        y1, y2 = y
        return np.array([
            (r * (1 - x1 / K) - a1 * x2 - a2 * y1 - (bb + a3) * y2) * x1,
            (a1 * x1 - e1 * y2 - g1 * y1 - m1) * x2 + b1 * x1 * y2,
        ])

    def H(x, y, s):
        x1, x2 = x
        y1, y2 = y
        return np.array([
            [a2 * x1 - e2 * y2 - g2 * x2 - m2, gb * x2],
            [b2 * x1, a3 * x1 + e1 * x2 + e2 * y1 - m3],
        ])

    def dF(x, y, s):
        K = K0 + s
        x1, x2 = x
        y1, y2 = y
        DxF = np.array([
            [r * (1 - x1 / K) - a1 * x2 - a2 * y1 - (bb + a3) * y2 - r * x1 / K, -a1 * x1],
            [a1 * x2 + b1 * y2, a1 * x1 - e1 * y2 - g1 * y1 - m1],
        ])
        DyF = np.array([[-a2 * x1, -(bb + a3) * x1], [-g1 * x2, -e1 * x2 + b1 * x1]])
        dsF = np.array([r * x1 * x1 / (K * K), 0.0])
        return DxF, DyF, dsF

    def dH(x, y, s):
        DxH = np.zeros((2, 2, 2))
        DxH[:, :, 0] = [[a2, 0.0], [b2, a3]]
        DxH[:, :, 1] = [[-g2, gb], [0.0, e1]]
        DyH = np.zeros((2, 2, 2))
        DyH[:, :, 0] = [[0.0, 0.0], [0.0, e2]]
        DyH[:, :, 1] = [[-e2, 0.0], [0.0, 0.0]]
        return DxH, DyH, np.zeros((2, 2))

    return DegenerateSystem(F=F, H=H, x_star=x_star, n=2, dF=dF, dH=dH)


def sir_theta(p, K0: float) -> np.ndarray:
    """``(beta2 sigma1, alpha2 (sigma2 - sigma1) + gamma2 x2*)``, the scale used for ``omega``."""
    s1, s2, _ = p.sigma
    x2 = p.r * (K0 - s1) / (p.alpha[0] * K0)
    return np.array([p.beta[1] * s1, p.alpha[1] * (s2 - s1) + p.gamma[1] * x2])


def sir_frame(p, K0: float) -> tuple[DegenerateSystem, BifurcationFrame]:
    sys = sir_system(p, K0)
    return sys, build_frame(sys, theta_hint=sir_theta(p, K0))
