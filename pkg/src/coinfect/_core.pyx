# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same API and numerics as ``coinfect._pycore``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, pow, isfinite

cnp.import_array()

cdef enum:
    NEWTON_CONVERGED = 0
    NEWTON_DIVERGED = 1
    NEWTON_LEFT_ORTHANT = 2
    NEWTON_SINGULAR = 3

cdef enum:
    ODE_MAX_TIME = 0
    ODE_CONVERGED = 1
    ODE_BLOWUP = 2
    ODE_STEP_UNDERFLOW = 3
    ODE_MAX_STEPS = 4

cdef double NEG_TOL = 1e-12
cdef double POSITIVITY_FLOOR = 2.0 ** -30
cdef double DESCENT_FLOOR = 2.0 ** -6


cdef inline void _rhs5(const double* p, const double* x, double* out) noexcept nogil:
    cdef double S = x[0], I1 = x[1], I2 = x[2], I12 = x[3], R = x[4]
    cdef double gbar = p[10] + p[11]
    cdef double bbar = p[12] + p[13]
    out[0] = (p[0] * (1.0 - S / p[1]) - p[2] * I1 - p[3] * I2 - (bbar + p[4]) * I12) * S
    out[1] = (p[2] * S - p[8] * I12 - p[10] * I2 - p[5]) * I1 + p[12] * S * I12
    out[2] = (p[3] * S - p[9] * I12 - p[11] * I1 - p[6]) * I2 + p[13] * S * I12
    out[3] = (p[4] * S + p[8] * I1 + p[9] * I2 - p[7]) * I12 + gbar * I1 * I2
    out[4] = p[14] * I1 + p[15] * I2 + p[16] * I12 - p[17] * R


cdef inline void _jac4(const double* p, const double* x, double* J) noexcept nogil:
    cdef double S = x[0], I1 = x[1], I2 = x[2], I12 = x[3]
    cdef double r = p[0], K = p[1], a1 = p[2], a2 = p[3], a3 = p[4]
    cdef double m1 = p[5], m2 = p[6], m3 = p[7], e1 = p[8], e2 = p[9]
    cdef double g1 = p[10], g2 = p[11], b1 = p[12], b2 = p[13]
    cdef double gbar = g1 + g2, bbar = b1 + b2
    cdef double g_1 = r * (1.0 - S / K) - a1 * I1 - a2 * I2 - (a3 + bbar) * I12
    J[0] = g_1 - r * S / K
    J[1] = -a1 * S
    J[2] = -a2 * S
    J[3] = -(a3 + bbar) * S
    J[4] = a1 * I1 + b1 * I12
    J[5] = a1 * S - e1 * I12 - g1 * I2 - m1
    J[6] = -g1 * I1
    J[7] = -e1 * I1 + b1 * S
    J[8] = a2 * I2 + b2 * I12
    J[9] = -g2 * I2
    J[10] = a2 * S - e2 * I12 - g2 * I1 - m2
    J[11] = -e2 * I2 + b2 * S
    J[12] = a3 * I12
    J[13] = e1 * I12 + gbar * I2
    J[14] = e2 * I12 + gbar * I1
    J[15] = a3 * S + e1 * I1 + e2 * I2 - m3


cdef inline int _solve4(double* A, double* b, double* out) noexcept nogil:
    """Solves A out = b in place (A, b destroyed); returns 0 when singular."""
    cdef int c, i, j, piv
    cdef double best, f, tmp, s
    for c in range(4):
        piv = c
        best = fabs(A[4 * c + c])
        for i in range(c + 1, 4):
            if fabs(A[4 * i + c]) > best:
                best = fabs(A[4 * i + c])
                piv = i
        if best < 1e-300:
            return 0
        if piv != c:
            for j in range(4):
                tmp = A[4 * c + j]
                A[4 * c + j] = A[4 * piv + j]
                A[4 * piv + j] = tmp
            tmp = b[c]
            b[c] = b[piv]
            b[piv] = tmp
        for i in range(c + 1, 4):
            f = A[4 * i + c] / A[4 * c + c]
            if f != 0.0:
                for j in range(c, 4):
                    A[4 * i + j] -= f * A[4 * c + j]
                b[i] -= f * b[c]
    for i in range(3, -1, -1):
        s = b[i]
        for j in range(i + 1, 4):
            s -= A[4 * i + j] * out[j]
        out[i] = s / A[4 * i + i]
    return 1


cdef inline double _maxabs(const double* v, int n) noexcept nogil:
    cdef double m = 0.0
    cdef int i
    for i in range(n):
        if fabs(v[i]) > m or v[i] != v[i]:
            m = fabs(v[i])
    return m


cdef int _newton(const double* p, double* x, double tol, int maxit, bint positive,
                 int* iters, double* resid) noexcept nogil:
    cdef double F[5]
    cdef double Ft[5]
    cdef double J[16]
    cdef double b[4]
    cdef double dx[4]
    cdef double xt[5]
    cdef double fn, ftn, t, xm
    cdef int it = 0, i
    cdef bint bad
    x[4] = 0.0
    xt[4] = 0.0
    _rhs5(p, x, F)
    fn = _maxabs(F, 4)
    while it < maxit:
        _jac4(p, x, J)
        for i in range(4):
            b[i] = -F[i]
        if not _solve4(J, b, dx):
            iters[0] = it
            resid[0] = fn
            return NEWTON_SINGULAR
        xm = _maxabs(x, 4)
        if fn <= tol and _maxabs(dx, 4) <= 1e-13 * (1.0 + xm):
            iters[0] = it
            resid[0] = fn
            return NEWTON_CONVERGED
        it += 1
        t = 1.0
        while True:
            bad = False
            for i in range(4):
                xt[i] = x[i] + t * dx[i]
                if xt[i] <= 0.0:
                    bad = True
            if positive and bad:
                t *= 0.5
                if t < POSITIVITY_FLOOR:
                    iters[0] = it
                    resid[0] = fn
                    return NEWTON_LEFT_ORTHANT
                continue
            _rhs5(p, xt, Ft)
            ftn = _maxabs(Ft, 4)
            if ftn != ftn:
                t *= 0.5
                if t < POSITIVITY_FLOOR:
                    iters[0] = it
                    resid[0] = fn
                    return NEWTON_DIVERGED
                continue
            if ftn <= fn * (1.0 - 1e-4 * t) or t <= DESCENT_FLOOR or ftn <= tol:
                break
            t *= 0.5
        for i in range(4):
            x[i] = xt[i]
            F[i] = Ft[i]
        fn = ftn
    iters[0] = it
    resid[0] = fn
    return NEWTON_CONVERGED if fn <= tol else NEWTON_DIVERGED


def rhs5(double[::1] p, x):
    """Right-hand side of the full five-compartment system."""
    cdef double xx[5]
    cdef double out[5]
    cdef int i
    cdef Py_ssize_t n = len(x)
    for i in range(5):
        xx[i] = float(x[i]) if i < n else 0.0
    _rhs5(&p[0], xx, out)
    return np.array([out[0], out[1], out[2], out[3], out[4]])


def jac4(double[::1] p, x):
    """Analytic Jacobian of the (S, I1, I2, I12) block."""
    cdef double xx[5]
    cdef int i
    for i in range(4):
        xx[i] = float(x[i])
    xx[4] = 0.0
    res = np.empty((4, 4))
    cdef double[:, ::1] rv = res
    _jac4(&p[0], xx, &rv[0, 0])
    return res


def newton_one(double[::1] p, seed, double tol, int maxit, bint positive):
    """Damped Newton for the 4D equilibrium system from one seed."""
    cdef double x[5]
    cdef int it = 0, status, i
    cdef double res = 0.0
    for i in range(4):
        x[i] = float(seed[i])
    status = _newton(&p[0], x, tol, maxit, positive, &it, &res)
    return np.array([x[0], x[1], x[2], x[3]]), status, it, res


def newton_batch(double[::1] p, seeds, double tol, int maxit, bint positive):
    """Run Newton from every row of ``seeds``; releases the GIL."""
    cdef double[:, ::1] sv = np.ascontiguousarray(seeds, dtype=np.float64)
    cdef Py_ssize_t n = sv.shape[0], k
    roots_a = np.empty((n, 4))
    status_a = np.empty(n, dtype=np.int64)
    iters_a = np.empty(n, dtype=np.int64)
    res_a = np.empty(n)
    cdef double[:, ::1] roots = roots_a
    cdef long long[::1] status = status_a
    cdef long long[::1] itv = iters_a
    cdef double[::1] resv = res_a
    cdef double x[5]
    cdef int it, i
    cdef double rr
    cdef const double* pp = &p[0]
    with nogil:
        for k in range(n):
            for i in range(4):
                x[i] = sv[k, i]
            it = 0
            rr = 0.0
            status[k] = _newton(pp, x, tol, maxit, positive, &it, &rr)
            for i in range(4):
                roots[k, i] = x[i]
            itv[k] = it
            resv[k] = rr
    return roots_a, status_a, iters_a, res_a


cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double A71 = 35.0 / 384, A73 = 500.0 / 1113, A74 = 125.0 / 192, A75 = -2187.0 / 6784, A76 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200
cdef double E6 = 22.0 / 525, E7 = -1.0 / 40


def dopri5(double[::1] p, x0, double t0, double t_end, double rtol, double atol,
           double h0, double stop_tol, long max_steps):
    """Adaptive Dormand-Prince integration; see ``_pycore.dopri5``."""
    cdef const double* pp = &p[0]
    cdef double y[5]
    cdef double ys[5]
    cdef double k1[5]
    cdef double k2[5]
    cdef double k3[5]
    cdef double k4[5]
    cdef double k5[5]
    cdef double k6[5]
    cdef double k7[5]
    cdef double t = t0, h, hmin, err, e, sc, fac, span, d0, d1, ymax
    cdef int i, flag = ODE_MAX_TIME
    cdef long steps = 0, n_clip = 0, cap = 1024, count = 1
    cdef bint last, clipped, finite
    for i in range(5):
        y[i] = float(x0[i])
    times_a = np.empty(cap)
    states_a = np.empty((cap, 5))
    cdef double[::1] tv = times_a
    cdef double[:, ::1] sv = states_a
    tv[0] = t
    for i in range(5):
        sv[0, i] = y[i]
    _rhs5(pp, y, k1)
    if stop_tol > 0.0 and _maxabs(k1, 5) <= stop_tol:
        return times_a[:1].copy(), states_a[:1].copy(), ODE_CONVERGED, 0
    span = t_end - t
    if span <= 0.0:
        return times_a[:1].copy(), states_a[:1].copy(), ODE_MAX_TIME, 0
    h = h0
    if h <= 0.0:
        d0 = 0.0
        d1 = 0.0
        for i in range(5):
            sc = atol + rtol * fabs(y[i])
            d0 += (y[i] / sc) ** 2
            d1 += (k1[i] / sc) ** 2
        d0 = sqrt(d0 / 5)
        d1 = sqrt(d1 / 5)
        h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    if h > span:
        h = span
    while t < t_end:
        if steps >= max_steps:
            flag = ODE_MAX_STEPS
            break
        hmin = 1e-14 * (fabs(t) if fabs(t) > 1.0 else 1.0)
        if h < hmin:
            flag = ODE_STEP_UNDERFLOW
            break
        last = t + h >= t_end
        if last:
            h = t_end - t
        for i in range(5):
            ys[i] = y[i] + h * A21 * k1[i]
        _rhs5(pp, ys, k2)
        for i in range(5):
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        _rhs5(pp, ys, k3)
        for i in range(5):
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        _rhs5(pp, ys, k4)
        for i in range(5):
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        _rhs5(pp, ys, k5)
        for i in range(5):
            ys[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        _rhs5(pp, ys, k6)
        for i in range(5):
            ys[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
        _rhs5(pp, ys, k7)
        err = 0.0
        finite = True
        ymax = 0.0
        for i in range(5):
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sc = atol + rtol * (fabs(y[i]) if fabs(y[i]) > fabs(ys[i]) else fabs(ys[i]))
            if fabs(e) / sc > err:
                err = fabs(e) / sc
            if not isfinite(ys[i]):
                finite = False
            if fabs(ys[i]) > ymax:
                ymax = fabs(ys[i])
        if not finite or ymax > 1e15:
            flag = ODE_BLOWUP
            break
        if err <= 1.0:
            clipped = False
            for i in range(5):
                if ys[i] < -NEG_TOL:
                    clipped = True
            if clipped:
                h *= 0.5
                if h < hmin:
                    flag = ODE_BLOWUP
                    break
                continue
            for i in range(5):
                if ys[i] < 0.0:
                    ys[i] = 0.0
                    clipped = True
            if clipped:
                n_clip += 1
                _rhs5(pp, ys, k7)
            t = t_end if last else t + h
            for i in range(5):
                y[i] = ys[i]
                k1[i] = k7[i]
            steps += 1
            if count == cap:
                cap *= 2
                times_a = np.resize(times_a, cap)
                states_a = np.resize(states_a, (cap, 5))
                tv = times_a
                sv = states_a
            tv[count] = t
            for i in range(5):
                sv[count, i] = y[i]
            count += 1
            if stop_tol > 0.0 and _maxabs(k1, 5) <= stop_tol:
                flag = ODE_CONVERGED
                break
            if err == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * pow(err, -0.2)
                fac = 5.0 if fac > 5.0 else (0.2 if fac < 0.2 else fac)
        else:
            fac = 0.9 * pow(err, -0.2)
            fac = 0.2 if fac < 0.2 else fac
        h *= fac
    return times_a[:count].copy(), states_a[:count].copy(), flag, n_clip
