# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trajectory integrators for the built-in velocity fields.

Same algorithm and status codes as ``_pykernels``; the per-point loop runs
without the GIL so callers can split a batch across threads.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, fabs, sqrt, pow, ceil, isfinite

cnp.import_array()

DEF OK = 0
DEF MAX_STEPS = 1
DEF LEFT_DOMAIN = 2
DEF NONFINITE = 3

DEF NONLINEAR_SADDLE = 0
DEF LINEAR_SADDLE = 1
DEF SPHERE_ROTATION = 2

cdef double SAFETY = 0.9
cdef double FACMIN = 0.2
cdef double FACMAX = 5.0

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double A71 = 35.0 / 384, A73 = 500.0 / 1113, A74 = 125.0 / 192, A75 = -2187.0 / 6784, A76 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef inline void _rhs(int kind, const double* p, double t, const double* s,
                      double* out, int dim) noexcept nogil:
    cdef double x = s[0], y = s[1]
    cdef double tx, ty, sx, sy, a = 0.0, b = 0.0, c = 0.0, d = 0.0
    if kind == NONLINEAR_SADDLE:
        tx = tanh(p[1] * x)
        ty = tanh(p[2] * y)
        out[0] = -p[0] * p[2] * (1.0 - ty * ty) * tx
        out[1] = p[0] * p[1] * ty * (1.0 - tx * tx)
        if dim == 6:
            sx = 1.0 - tx * tx
            sy = 1.0 - ty * ty
            a = -p[0] * p[1] * p[2] * sx * sy
            b = 2.0 * p[0] * p[2] * p[2] * tx * ty * sy
            c = -2.0 * p[0] * p[1] * p[1] * tx * ty * sx
            d = p[0] * p[1] * p[2] * sx * sy
    elif kind == LINEAR_SADDLE:
        out[0] = -p[0] * x
        out[1] = p[0] * y
        a = -p[0]
        d = p[0]
    else:
        out[0] = p[0]
        out[1] = 0.0
    if dim == 6:
        out[2] = a * s[2] + b * s[4]
        out[3] = a * s[3] + b * s[5]
        out[4] = c * s[2] + d * s[4]
        out[5] = c * s[3] + d * s[5]


cdef inline bint _inside(const double* s, const double* bnd) noexcept nogil:
    return s[0] >= bnd[0] and s[0] <= bnd[1] and s[1] >= bnd[2] and s[1] <= bnd[3]


cdef int _dopri_one(int kind, const double* p, double* s, int dim, double t1,
                    double span, double rtol, double atol, double step,
                    long max_steps, const double* bnd, long* nsteps) noexcept nogil:
    cdef double k1[6]
    cdef double k2[6]
    cdef double k3[6]
    cdef double k4[6]
    cdef double k5[6]
    cdef double k6[6]
    cdef double k7[6]
    cdef double acc[6]
    cdef double ev, sc, err, fac, hh, hs, t, remaining
    cdef double direction = 1.0 if span > 0 else -1.0
    cdef double total = fabs(span)
    cdef double elapsed = 0.0
    cdef double h = step if step < total else total
    cdef bint rejected_last = False, accept, finite, last
    cdef int i

    _rhs(kind, p, t1, s, k1, dim)
    while True:
        remaining = total - elapsed
        last = h >= remaining
        hh = remaining if last else h
        hs = direction * hh
        t = t1 + direction * elapsed

        for i in range(dim):
            acc[i] = s[i] + (hs * A21) * k1[i]
        _rhs(kind, p, t + C2 * hs, acc, k2, dim)
        for i in range(dim):
            acc[i] = s[i] + (hs * A31) * k1[i] + (hs * A32) * k2[i]
        _rhs(kind, p, t + C3 * hs, acc, k3, dim)
        for i in range(dim):
            acc[i] = s[i] + (hs * A41) * k1[i] + (hs * A42) * k2[i] + (hs * A43) * k3[i]
        _rhs(kind, p, t + C4 * hs, acc, k4, dim)
        for i in range(dim):
            acc[i] = (s[i] + (hs * A51) * k1[i] + (hs * A52) * k2[i] + (hs * A53) * k3[i]
                      + (hs * A54) * k4[i])
        _rhs(kind, p, t + C5 * hs, acc, k5, dim)
        for i in range(dim):
            acc[i] = (s[i] + (hs * A61) * k1[i] + (hs * A62) * k2[i] + (hs * A63) * k3[i]
                      + (hs * A64) * k4[i] + (hs * A65) * k5[i])
        _rhs(kind, p, t + hs, acc, k6, dim)
        for i in range(dim):
            acc[i] = (s[i] + (hs * A71) * k1[i] + (hs * A73) * k3[i] + (hs * A74) * k4[i]
                      + (hs * A75) * k5[i] + (hs * A76) * k6[i])
        _rhs(kind, p, t + hs, acc, k7, dim)

        err = 0.0
        finite = True
        for i in range(dim):
            ev = (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                  + E7 * k7[i]) * hs
            sc = atol + rtol * (fabs(s[i]) if fabs(s[i]) > fabs(acc[i]) else fabs(acc[i]))
            err += (ev / sc) * (ev / sc)
            if not isfinite(acc[i]):
                finite = False
        err = sqrt(err / dim)
        if not isfinite(err):
            finite = False
        accept = finite and err <= 1.0

        if not finite:
            fac = FACMIN
        elif err == 0.0:
            fac = FACMAX
        else:
            fac = SAFETY * pow(err, -0.2)
            if fac < FACMIN:
                fac = FACMIN
            elif fac > FACMAX:
                fac = FACMAX
        if accept and rejected_last and fac > 1.0:
            fac = 1.0

        if accept:
            for i in range(dim):
                s[i] = acc[i]
                k1[i] = k7[i]
            elapsed = total if last else elapsed + hh
            nsteps[0] += 1
        rejected_last = not accept
        h = hh * fac

        if accept:
            if not _inside(s, bnd):
                return LEFT_DOMAIN
            if elapsed >= total:
                return OK
            if nsteps[0] >= max_steps:
                return MAX_STEPS
        else:
            if h < 1e-14 * (total if total > 1.0 else 1.0):
                return MAX_STEPS if finite else NONFINITE


cdef int _rk4_one(int kind, const double* p, double* s, int dim, double t1,
                  double span, double step, long max_steps, const double* bnd,
                  long* nsteps) noexcept nogil:
    cdef double k1[6]
    cdef double k2[6]
    cdef double k3[6]
    cdef double k4[6]
    cdef double acc[6]
    cdef long nstep = <long>ceil(fabs(span) / step - 1e-12)
    cdef long k
    cdef double h, t
    cdef int i
    if nstep < 1:
        nstep = 1
    if nstep > max_steps:
        return MAX_STEPS
    h = span / nstep
    for k in range(nstep):
        t = t1 + k * h
        _rhs(kind, p, t, s, k1, dim)
        for i in range(dim):
            acc[i] = s[i] + 0.5 * h * k1[i]
        _rhs(kind, p, t + 0.5 * h, acc, k2, dim)
        for i in range(dim):
            acc[i] = s[i] + 0.5 * h * k2[i]
        _rhs(kind, p, t + 0.5 * h, acc, k3, dim)
        for i in range(dim):
            acc[i] = s[i] + h * k3[i]
        _rhs(kind, p, t + h, acc, k4, dim)
        for i in range(dim):
            s[i] = s[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        nsteps[0] += 1
        for i in range(dim):
            if not isfinite(s[i]):
                return NONFINITE
        if not _inside(s, bnd):
            return LEFT_DOMAIN
    return OK


def integrate_batch(int kind, double[::1] params, double[:, ::1] pts, double t1,
                    double t2, int method=0, double rtol=1e-10, double atol=1e-10,
                    double step=1e-2, long max_steps=100000, bounds=None,
                    bint variational=False):
    """Integrate ``pts`` (N, 2) under built-in field ``kind``.

    Returns ``(final, jacobian_or_None, status, nsteps)`` like the numpy backend.
    """
    cdef Py_ssize_t n = pts.shape[0], k
    cdef int dim = 6 if variational else 2
    cdef double span = t2 - t1
    if bounds is None:
        bounds = (-np.inf, np.inf, -np.inf, np.inf)
    cdef double[::1] bnd = np.ascontiguousarray(bounds, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] state_arr = np.zeros((n, dim))
    cdef double[:, ::1] state = state_arr
    cdef cnp.ndarray[cnp.int8_t, ndim=1] status_arr = np.zeros(n, dtype=np.int8)
    cdef signed char[::1] status = status_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] nsteps_arr = np.zeros(n, dtype=np.int64)
    cdef long[::1] nsteps = nsteps_arr
    cdef const double* p = &params[0] if params.shape[0] else NULL
    cdef double dummy[1]
    if p == NULL:
        p = dummy

    with nogil:
        for k in range(n):
            state[k, 0] = pts[k, 0]
            state[k, 1] = pts[k, 1]
            if dim == 6:
                state[k, 2] = 1.0
                state[k, 5] = 1.0
            if not _inside(&state[k, 0], &bnd[0]):
                status[k] = LEFT_DOMAIN
                continue
            if span == 0.0:
                continue
            if method == 1:
                status[k] = _rk4_one(kind, p, &state[k, 0], dim, t1, span, step,
                                     max_steps, &bnd[0], &nsteps[k])
            else:
                status[k] = _dopri_one(kind, p, &state[k, 0], dim, t1, span, rtol,
                                       atol, step, max_steps, &bnd[0], &nsteps[k])

    final = np.ascontiguousarray(state_arr[:, :2])
    jacobian = None
    if variational:
        jacobian = np.ascontiguousarray(state_arr[:, 2:]).reshape(-1, 2, 2)
    return final, jacobian, status_arr, nsteps_arr
