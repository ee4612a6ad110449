"""Pure-Python kernels.

Reference implementation of the hot loops; ``coinfect._core`` (Cython) mirrors
this module function for function and is preferred when it is importable.

Parameter vectors use the layout below (see ``model.Params.to_vector``)::

    0 r   1 K   2 a1  3 a2  4 a3  5 m1  6 m2  7 m3  8 e1  9 e2
    10 g1 11 g2 12 b1 13 b2 14 rho1 15 rho2 16 rho3 17 d4
"""

import math

import numpy as np

NEWTON_CONVERGED = 0
NEWTON_DIVERGED = 1
NEWTON_LEFT_ORTHANT = 2
NEWTON_SINGULAR = 3

ODE_MAX_TIME = 0
ODE_CONVERGED = 1
ODE_BLOWUP = 2
ODE_STEP_UNDERFLOW = 3
ODE_MAX_STEPS = 4

NEG_TOL = 1e-12
POSITIVITY_FLOOR = 2.0 ** -30
DESCENT_FLOOR = 2.0 ** -6


def _rhs5(p, S, I1, I2, I12, R):
    r, K = p[0], p[1]
    a1, a2, a3 = p[2], p[3], p[4]
    m1, m2, m3 = p[5], p[6], p[7]
    e1, e2 = p[8], p[9]
    g1, g2 = p[10], p[11]
    b1, b2 = p[12], p[13]
    gbar = g1 + g2
    bbar = b1 + b2
    dS = (r * (1.0 - S / K) - a1 * I1 - a2 * I2 - (bbar + a3) * I12) * S
    dI1 = (a1 * S - e1 * I12 - g1 * I2 - m1) * I1 + b1 * S * I12
    dI2 = (a2 * S - e2 * I12 - g2 * I1 - m2) * I2 + b2 * S * I12
    dI12 = (a3 * S + e1 * I1 + e2 * I2 - m3) * I12 + gbar * I1 * I2
    dR = p[14] * I1 + p[15] * I2 + p[16] * I12 - p[17] * R
    return dS, dI1, dI2, dI12, dR


def rhs5(p, x):
    """Right-hand side of the full five-compartment system."""
    R = x[4] if len(x) > 4 else 0.0
    return np.array(_rhs5(p, x[0], x[1], x[2], x[3], R))


def _jac4(p, S, I1, I2, I12):
    r, K = p[0], p[1]
    a1, a2, a3 = p[2], p[3], p[4]
    m1, m2, m3 = p[5], p[6], p[7]
    e1, e2 = p[8], p[9]
    g1, g2 = p[10], p[11]
    b1, b2 = p[12], p[13]
    gbar = g1 + g2
    bbar = b1 + b2
    g_1 = r * (1.0 - S / K) - a1 * I1 - a2 * I2 - (a3 + bbar) * I12
    return (
        (g_1 - r * S / K, -a1 * S, -a2 * S, -(a3 + bbar) * S),
        (a1 * I1 + b1 * I12, a1 * S - e1 * I12 - g1 * I2 - m1, -g1 * I1, -e1 * I1 + b1 * S),
        (a2 * I2 + b2 * I12, -g2 * I2, a2 * S - e2 * I12 - g2 * I1 - m2, -e2 * I2 + b2 * S),
        (a3 * I12, e1 * I12 + gbar * I2, e2 * I12 + gbar * I1, a3 * S + e1 * I1 + e2 * I2 - m3),
    )


def jac4(p, x):
    """Analytic Jacobian of the (S, I1, I2, I12) block."""
    return np.array(_jac4(p, x[0], x[1], x[2], x[3]))


def _solve4(A, b):
    """Gaussian elimination with partial pivoting; None when singular."""
    M = [list(A[i]) + [b[i]] for i in range(4)]
    for c in range(4):
        piv = max(range(c, 4), key=lambda i: abs(M[i][c]))
        if abs(M[piv][c]) < 1e-300:
            return None
        if piv != c:
            M[c], M[piv] = M[piv], M[c]
        inv = 1.0 / M[c][c]
        for i in range(c + 1, 4):
            f = M[i][c] * inv
            if f != 0.0:
                Mi, Mc = M[i], M[c]
                for j in range(c, 5):
                    Mi[j] -= f * Mc[j]
    out = [0.0] * 4
    for i in range(3, -1, -1):
        s = M[i][4]
        for j in range(i + 1, 4):
            s -= M[i][j] * out[j]
        out[i] = s / M[i][i]
    return out


def _maxabs(v):
    return max(abs(t) for t in v)


def newton_one(p, seed, tol, maxit, positive):
    """Damped Newton for the 4D equilibrium system from one seed.

    Returns ``(x, status, iterations, residual)``.
    """
    x = [float(t) for t in seed[:4]]
    F = _rhs5(p, x[0], x[1], x[2], x[3], 0.0)[:4]
    fn = _maxabs(F)
    it = 0
    while it < maxit:
        J = _jac4(p, *x)
        dx = _solve4(J, [-f for f in F])
        if dx is None:
            return np.array(x), NEWTON_SINGULAR, it, fn
        if fn <= tol and _maxabs(dx) <= 1e-13 * (1.0 + _maxabs(x)):
            return np.array(x), NEWTON_CONVERGED, it, fn
        it += 1
        t = 1.0
        while True:
            xt = [x[i] + t * dx[i] for i in range(4)]
            if positive and min(xt) <= 0.0:
                t *= 0.5
                if t < POSITIVITY_FLOOR:
                    return np.array(x), NEWTON_LEFT_ORTHANT, it, fn
                continue
            Ft = _rhs5(p, xt[0], xt[1], xt[2], xt[3], 0.0)[:4]
            ftn = _maxabs(Ft)
            if ftn != ftn:
                t *= 0.5
                if t < POSITIVITY_FLOOR:
                    return np.array(x), NEWTON_DIVERGED, it, fn
                continue
            if ftn <= fn * (1.0 - 1e-4 * t) or t <= DESCENT_FLOOR or ftn <= tol:
                break
            t *= 0.5
        x, F, fn = xt, Ft, ftn
    status = NEWTON_CONVERGED if fn <= tol else NEWTON_DIVERGED
    return np.array(x), status, it, fn


def newton_batch(p, seeds, tol, maxit, positive):
    """Run :func:`newton_one` from every row of ``seeds``.

    Returns ``(roots, status, iterations, residuals)`` arrays.
    """
    seeds = np.asarray(seeds, dtype=float)
    n = seeds.shape[0]
    roots = np.empty((n, 4))
    status = np.empty(n, dtype=np.int64)
    iters = np.empty(n, dtype=np.int64)
    res = np.empty(n)
    for k in range(n):
        roots[k], status[k], iters[k], res[k] = newton_one(p, seeds[k], tol, maxit, positive)
    return roots, status, iters, res


# Dormand-Prince 5(4) tableau
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
)


def _f(p, y):
    return _rhs5(p, y[0], y[1], y[2], y[3], y[4])


def dopri5(p, x0, t0, t_end, rtol, atol, h0, stop_tol, max_steps):
    """Adaptive Dormand-Prince integration of the five-compartment system.

    Every accepted step is recorded. ``stop_tol > 0`` ends the run as soon as
    the max-norm of the right-hand side drops to ``stop_tol``.

    Returns ``(times, states, flag, n_clipped)``.
    """
    y = [float(v) for v in x0]
    t = float(t0)
    times = [t]
    states = [list(y)]
    n_clip = 0
    k1 = _f(p, y)
    if stop_tol > 0.0 and _maxabs(k1) <= stop_tol:
        return np.array(times), np.array(states), ODE_CONVERGED, n_clip
    span = t_end - t
    if span <= 0.0:
        return np.array(times), np.array(states), ODE_MAX_TIME, n_clip
    h = h0
    if h <= 0.0:
        sc = [atol + rtol * abs(v) for v in y]
        d0 = math.sqrt(sum((y[i] / sc[i]) ** 2 for i in range(5)) / 5)
        d1 = math.sqrt(sum((k1[i] / sc[i]) ** 2 for i in range(5)) / 5)
        h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = min(h, span)
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            return np.array(times), np.array(states), ODE_MAX_STEPS, n_clip
        hmin = 1e-14 * max(1.0, abs(t))
        if h < hmin:
            return np.array(times), np.array(states), ODE_STEP_UNDERFLOW, n_clip
        last = t + h >= t_end
        if last:
            h = t_end - t
        ks = [k1]
        for s in range(1, 7):
            a = _A[s]
            ys = [y[i] + h * sum(a[j] * ks[j][i] for j in range(s)) for i in range(5)]
            ks.append(_f(p, ys))
        ynew = ys  # stage 7 is evaluated at the 5th-order solution
        err = 0.0
        for i in range(5):
            e = h * sum(_E[j] * ks[j][i] for j in range(7))
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err = max(err, abs(e) / sc)
        if not all(math.isfinite(v) for v in ynew) or max(abs(v) for v in ynew) > 1e15:
            return np.array(times), np.array(states), ODE_BLOWUP, n_clip
        if err <= 1.0:
            if min(ynew) < -NEG_TOL:
                h *= 0.5
                if h < hmin:
                    return np.array(times), np.array(states), ODE_BLOWUP, n_clip
                continue
            clipped = False
            for i in range(5):
                if ynew[i] < 0.0:
                    ynew[i] = 0.0
                    clipped = True
            if clipped:
                n_clip += 1
                k7 = _f(p, ynew)
            else:
                k7 = ks[6]
            t = t_end if last else t + h
            y = ynew
            k1 = k7
            steps += 1
            times.append(t)
            states.append(list(y))
            if stop_tol > 0.0 and _maxabs(k1) <= stop_tol:
                return np.array(times), np.array(states), ODE_CONVERGED, n_clip
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        h *= fac
    return np.array(times), np.array(states), ODE_MAX_TIME, n_clip
