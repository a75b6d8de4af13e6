# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled weighted L_alpha solver for Euclidean space, S^2 and the hyperboloid.

Mirrors ``_kernels_py.solve_l_alpha`` step for step; manifold ``kind`` codes are
0 (Euclidean, any dimension), 1 (unit sphere in R^3), 2 (hyperboloid in R^3).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, sin, cos, sinh, cosh, asinh, atan2, fabs, INFINITY

cnp.import_array()

cdef double TINY = 1e-12
cdef double ROUNDING = 1e-14
cdef double MIN_STEP = 1e-12
cdef int STALL_LIMIT = 20


cdef inline double _dot(int kind, const double* u, const double* v, Py_ssize_t dim) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t k
    for k in range(dim):
        s += u[k] * v[k]
    if kind == 2:
        s -= 2.0 * u[0] * v[0]
    return s


cdef inline int _log(int kind, const double* p, const double* y, double* out,
                     double* dist, Py_ssize_t dim) noexcept nogil:
    """Write log_p(y) into ``out`` and d(p, y) into ``dist``; return 1 on cut locus."""
    cdef Py_ssize_t k
    cdef double c, s, th, m, n
    if kind == 0:
        s = 0.0
        for k in range(dim):
            out[k] = y[k] - p[k]
            s += out[k] * out[k]
        dist[0] = sqrt(s)
        return 0
    if kind == 1:
        c = p[0] * y[0] + p[1] * y[1] + p[2] * y[2]
        for k in range(3):
            out[k] = y[k] - c * p[k]
        s = sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2])
        th = atan2(s, c)
        dist[0] = th
        if s < TINY:
            for k in range(3):
                out[k] = 0.0
            return 1 if c < 0 else 0
        for k in range(3):
            out[k] *= th / s
        return 0
    m = p[0] * y[0] - p[1] * y[1] - p[2] * y[2]
    for k in range(3):
        out[k] = y[k] - m * p[k]
    if m >= 2.0:
        n = sqrt(m * m - 1.0)
    else:
        n = -out[0] * out[0] + out[1] * out[1] + out[2] * out[2]
        n = sqrt(n) if n > 0.0 else 0.0
    th = asinh(n)
    dist[0] = th
    if n < TINY:
        for k in range(3):
            out[k] = 0.0
        return 0
    for k in range(3):
        out[k] *= th / n
    return 0


cdef inline double _dist(int kind, const double* p, const double* y, double* scratch,
                         Py_ssize_t dim) noexcept nogil:
    cdef double d
    _log(kind, p, y, scratch, &d, dim)
    return d


cdef inline void _exp(int kind, const double* p, const double* v, double t, double* out,
                      Py_ssize_t dim) noexcept nogil:
    cdef Py_ssize_t k
    cdef double n, a, b, s
    if kind == 0:
        for k in range(dim):
            out[k] = p[k] + t * v[k]
        return
    n = fabs(t) * sqrt(fabs(_dot(kind, v, v, dim)))
    if n < TINY:
        for k in range(dim):
            out[k] = p[k]
        return
    if kind == 1:
        a = cos(n)
        b = sin(n) * t / n
        for k in range(3):
            out[k] = a * p[k] + b * v[k]
        s = sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2])
        for k in range(3):
            out[k] /= s
        return
    a = cosh(n)
    b = sinh(n) * t / n
    for k in range(3):
        out[k] = a * p[k] + b * v[k]
    out[0] = sqrt(1.0 + out[1] * out[1] + out[2] * out[2])


cdef double _objective(int kind, const double* p, double[:, ::1] Y, double[::1] w, int alpha,
                       double* scratch) noexcept nogil:
    cdef Py_ssize_t i, n = Y.shape[0], dim = Y.shape[1]
    cdef double d, f = 0.0
    for i in range(n):
        d = _dist(kind, p, &Y[i, 0], scratch, dim)
        f += w[i] * (d * d if alpha == 2 else d)
    return f


cdef int _descent(int kind, const double* p, double[:, ::1] Y, double[::1] w, int alpha,
                  double eps, double* D, double* R, double* scratch,
                  double* gnorm, double* slope) noexcept nogil:
    """Search direction into D; minimal (sub)gradient norm and slope by pointer."""
    cdef Py_ssize_t i, k, n = Y.shape[0], dim = Y.shape[1]
    cdef double d, c, wc = 0.0, csum = 0.0, rn, dn, scale
    cdef int cut = 0
    for k in range(dim):
        D[k] = 0.0
        R[k] = 0.0
    if alpha == 2:
        for i in range(n):
            cut |= _log(kind, p, &Y[i, 0], scratch, &d, dim)
            for k in range(dim):
                D[k] += w[i] * scratch[k]
        dn = sqrt(fabs(_dot(kind, D, D, dim)))
        gnorm[0] = 2.0 * dn
        slope[0] = -2.0 * dn * dn
        return cut
    for i in range(n):
        cut |= _log(kind, p, &Y[i, 0], scratch, &d, dim)
        if d <= eps:
            wc += w[i]
            continue
        c = w[i] / sqrt(d * d + eps * eps)
        csum += c
        for k in range(dim):
            R[k] += c * scratch[k]
    rn = sqrt(fabs(_dot(kind, R, R, dim)))
    gnorm[0] = rn - wc if rn > wc else 0.0
    if csum == 0.0 or gnorm[0] == 0.0:
        gnorm[0] = 0.0
        slope[0] = 0.0
        return cut
    scale = 1.0 / csum
    if wc > 0.0:
        scale *= 1.0 - wc / rn
    for k in range(dim):
        D[k] = R[k] * scale
    dn = sqrt(fabs(_dot(kind, D, D, dim)))
    slope[0] = -_dot(kind, R, D, dim) + wc * dn
    return cut


def objective(int kind, double[:, ::1] Y, double[::1] w, int alpha, double[::1] p):
    cdef double[::1] scratch = np.empty(Y.shape[1])
    return _objective(kind, &p[0], Y, w, alpha, &scratch[0])


def best_data_point(int kind, double[:, ::1] Y, double[::1] w, int alpha):
    """Index of the sample point with the smallest weighted objective."""
    cdef Py_ssize_t j, n = Y.shape[0]
    cdef double f, best = INFINITY
    cdef Py_ssize_t arg = 0
    cdef double[::1] scratch = np.empty(Y.shape[1])
    with nogil:
        for j in range(n):
            f = _objective(kind, &Y[j, 0], Y, w, alpha, &scratch[0])
            if f < best:
                best = f
                arg = j
    return arg


def solve_l_alpha(int kind, double[:, ::1] Y, double[::1] w, int alpha, double[::1] init,
                  int max_iterations=1000, double step_size=1.0, double tol=1e-9,
                  double eps=1e-9, double snap_radius=1e-6):
    """See ``_kernels_py.solve_l_alpha``; raises ValueError on a cut-locus point."""
    cdef Py_ssize_t i, k, n = Y.shape[0], dim = Y.shape[1]
    cdef double[::1] p = np.array(init, dtype=np.float64, copy=True)
    cdef double[::1] p_new = np.empty(dim)
    cdef double[::1] D = np.empty(dim)
    cdef double[::1] R = np.empty(dim)
    cdef double[::1] D2 = np.empty(dim)
    cdef double[::1] R2 = np.empty(dim)
    cdef double[::1] scratch = np.empty(dim)
    cdef double f, f_new, f_j, t, d, dmin, gnorm = INFINITY, slope, g_j, s_j
    cdef double best_gnorm = INFINITY
    cdef int iterations = 0, converged = 0, cut = 0, accepted, stalled = 0
    cdef Py_ssize_t j
    trace = [0.0]
    with nogil:
        f = _objective(kind, &p[0], Y, w, alpha, &scratch[0])
    trace[0] = f
    while True:
        if alpha == 1 and snap_radius > 0:
            dmin = INFINITY
            j = 0
            for i in range(n):
                d = _dist(kind, &p[0], &Y[i, 0], &scratch[0], dim)
                if d < dmin:
                    dmin = d
                    j = i
            if eps < dmin < snap_radius:
                cut |= _descent(kind, &Y[j, 0], Y, w, alpha, eps, &D2[0], &R2[0], &scratch[0], &g_j, &s_j)
                f_j = _objective(kind, &Y[j, 0], Y, w, alpha, &scratch[0])
                if g_j <= tol and f_j <= f + ROUNDING * max(1.0, fabs(f)):
                    for k in range(dim):
                        p[k] = Y[j, k]
                    f = f_j
                    trace.append(f)
        with nogil:
            cut |= _descent(kind, &p[0], Y, w, alpha, eps, &D[0], &R[0], &scratch[0], &gnorm, &slope)
        if cut:
            raise ValueError("cut locus: a data point is antipodal to the iterate")
        if gnorm <= tol:
            converged = 1
            break
        if gnorm < 0.5 * best_gnorm:
            best_gnorm = gnorm
            stalled = 0
        if iterations >= max_iterations or slope >= 0.0 or stalled >= STALL_LIMIT:
            break
        t = step_size
        accepted = 0
        with nogil:
            while t >= MIN_STEP * step_size:
                _exp(kind, &p[0], &D[0], t, &p_new[0], dim)
                f_new = _objective(kind, &p_new[0], Y, w, alpha, &scratch[0])
                if f_new <= f + ROUNDING * max(1.0, fabs(f)):
                    accepted = 1
                    break
                t *= 0.5
        if not accepted:
            break
        if f_new >= f - ROUNDING * max(1.0, fabs(f)):
            stalled += 1
        else:
            stalled = 0
        p[:] = p_new
        f = f_new
        trace.append(f)
        iterations += 1
    return np.asarray(p), f, iterations, bool(converged), gnorm, np.asarray(trace)
