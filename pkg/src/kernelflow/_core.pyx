# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the descent and proximal solvers.

Same functions and return conventions as the pure-numpy module `_core_py`.
"""

import numpy as np

from libc.math cimport fabs, sqrt, isfinite
from libc.stdlib cimport qsort
from libc.string cimport memcpy

cdef enum:
    KGD = 0
    KSGD = 1
    KCD = 2
    KEGD = 3

MAX_STEPS, CONVERGED, DIVERGED = 0, 1, 2
L1, LINF = 0, 1


cdef inline double _sign(double x) noexcept nogil:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


cdef void _norms(const double* r, Py_ssize_t n, double* out) noexcept nogil:
    cdef double l1 = 0.0, l2 = 0.0, linf = 0.0, a
    cdef Py_ssize_t i
    for i in range(n):
        a = fabs(r[i])
        l1 += a
        l2 += r[i] * r[i]
        if a > linf:
            linf = a
    out[0] = l1
    out[1] = sqrt(l2)
    out[2] = linf


cdef void _matvec(const double[:, ::1] K, const double* v, double* out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += K[i, j] * v[j]
        out[i] = acc


def new_state(const double[::1] y):
    """Solver state at alpha = 0: rows alpha, residual, velocity, K velocity, direction, K direction."""
    st = np.zeros((6, y.shape[0]))
    st[1] = y
    return st


def descent_run(const double[:, ::1] K, const double[::1] y, int method, double eta,
                double gamma, double mix, long long max_steps,
                const long long[::1] record_steps, double stop_tol,
                double diverge_limit, long long resync, double[:, ::1] state=None,
                long long k0=0):
    """Advance a descent method from `state` (alpha = 0 if None) at step k0 up to step max_steps.

    `state` is updated in place. Returns
    (snap_alpha, snap_norms, snap_steps, alpha, norms, steps_done, status).
    """
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t n_rec = record_steps.shape[0]
    snap_alpha_np = np.zeros((n_rec, n))
    snap_norms_np = np.zeros((n_rec, 3))
    snap_steps_np = np.zeros(n_rec, dtype=np.int64)
    norms_np = np.zeros(3)
    cdef double[:, ::1] snap_alpha = snap_alpha_np
    cdef double[:, ::1] snap_norms = snap_norms_np
    cdef long long[::1] snap_steps = snap_steps_np
    cdef double[::1] norms = norms_np
    if state is None:
        state = new_state(y)
    cdef double[::1] alpha = state[0]
    cdef double[::1] r = state[1]
    cdef double[::1] u = state[2]
    cdef double[::1] Ku = state[3]
    cdef double[::1] d = state[4]
    cdef double[::1] Kd = state[5]
    cdef double[::1] d_new = np.zeros(n)
    cdef double[::1] tmp = np.zeros(n)
    cdef Py_ssize_t i, j, m, idx = 0, n_snap = 0
    cdef long long k = k0
    cdef int status = 0
    cdef double linf, a, thr, delta, l2

    with nogil:
        while k < max_steps:
            linf = 0.0
            m = 0
            for i in range(n):
                a = fabs(r[i])
                if a > linf:
                    linf = a
                    m = i
            if linf < stop_tol:
                status = 1
                break

            # search direction and its image under K
            if method == KGD:
                for i in range(n):
                    d[i] = r[i]
                _matvec(K, &d[0], &Kd[0], n)
            else:
                if method == KSGD:
                    for i in range(n):
                        d_new[i] = _sign(r[i])
                elif method == KCD:
                    for i in range(n):
                        d_new[i] = 0.0
                    d_new[m] = _sign(r[m])
                else:
                    thr = mix * linf
                    for i in range(n):
                        if fabs(r[i]) >= thr:
                            d_new[i] = _sign(r[i])
                        else:
                            d_new[i] = 0.0
                # K is symmetric: column j == row j
                for j in range(n):
                    delta = d_new[j] - d[j]
                    if delta != 0.0:
                        for i in range(n):
                            Kd[i] += delta * K[j, i]
                        d[j] = d_new[j]

            for i in range(n):
                u[i] = gamma * u[i] + d[i]
                Ku[i] = gamma * Ku[i] + Kd[i]
                alpha[i] += eta * u[i]
                r[i] -= eta * Ku[i]
            k += 1

            if resync > 0 and k % resync == 0:
                # wipe accumulated round-off in the incrementally maintained vectors
                _matvec(K, &alpha[0], &tmp[0], n)
                for i in range(n):
                    r[i] = y[i] - tmp[i]
                _matvec(K, &u[0], &Ku[0], n)
                if method != KGD:
                    _matvec(K, &d[0], &Kd[0], n)

            l2 = 0.0
            for i in range(n):
                l2 += r[i] * r[i]
            l2 = sqrt(l2)
            if not (l2 <= diverge_limit):
                status = 2
                break

            while idx < n_rec and record_steps[idx] <= k:
                if record_steps[idx] == k:
                    memcpy(&snap_alpha[n_snap, 0], &alpha[0], n * sizeof(double))
                    _norms(&r[0], n, &snap_norms[n_snap, 0])
                    snap_steps[n_snap] = k
                    n_snap += 1
                idx += 1
        _norms(&r[0], n, &norms[0])

    return (snap_alpha_np[:n_snap], snap_norms_np[:n_snap], snap_steps_np[:n_snap],
            np.array(alpha), norms_np, int(k), status)


cdef int _cmp_desc(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*>a)[0]
    cdef double z = (<const double*>b)[0]
    if x < z:
        return 1
    if x > z:
        return -1
    return 0


cdef double _l1_ball_threshold(const double* v, Py_ssize_t n, double radius, double* work) noexcept nogil:
    cdef Py_ssize_t i
    cdef double total = 0.0, css = 0.0, tau = 0.0
    for i in range(n):
        work[i] = fabs(v[i])
        total += work[i]
    if total <= radius:
        return 0.0
    qsort(work, n, sizeof(double), _cmp_desc)
    for i in range(n):
        css += work[i]
        # the leading entry always qualifies; rounding can hide that for tiny radii
        if i == 0 or work[i] - (css - radius) / (i + 1.0) > 0:
            tau = (css - radius) / (i + 1.0)
    return tau if tau > 0 else 0.0


cdef void _soft(double* v, Py_ssize_t n, double tau) noexcept nogil:
    cdef Py_ssize_t i
    cdef double a
    for i in range(n):
        a = fabs(v[i]) - tau
        v[i] = _sign(v[i]) * a if a > 0 else 0.0


cdef void _prox_linf(double* v, Py_ssize_t n, double tau, double* work, double* proj) noexcept nogil:
    cdef Py_ssize_t i
    cdef double thr
    if tau <= 0:
        return
    thr = _l1_ball_threshold(v, n, tau, work)
    for i in range(n):
        proj[i] = v[i]
    if thr > 0:
        _soft(proj, n, thr)
    for i in range(n):
        v[i] = v[i] - proj[i]


def l1_ball_threshold(v, double radius):
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=float)
    cdef double[::1] work = np.empty(vv.shape[0])
    return _l1_ball_threshold(&vv[0], vv.shape[0], radius, &work[0])


def soft_threshold(v, double tau):
    out = np.array(v, dtype=float)
    cdef double[::1] o = out
    if o.shape[0]:
        _soft(&o[0], o.shape[0], tau)
    return out


def project_l1_ball(v, double radius):
    out = np.array(v, dtype=float)
    cdef double[::1] o = out
    cdef Py_ssize_t n = o.shape[0]
    cdef double[::1] work = np.empty(n)
    cdef double thr
    if n == 0:
        return out
    thr = _l1_ball_threshold(&o[0], n, radius, &work[0])
    if thr > 0:
        _soft(&o[0], n, thr)
    return out


def prox_linf(v, double tau):
    out = np.array(v, dtype=float)
    cdef double[::1] o = out
    cdef Py_ssize_t n = o.shape[0]
    cdef double[::1] work = np.empty(n)
    cdef double[::1] proj = np.empty(n)
    if n:
        _prox_linf(&o[0], n, tau, &work[0], &proj[0])
    return out


def prox_run(const double[:, ::1] K, const double[::1] y, int penalty, double lam,
             double eta, alpha0, long long max_iter, double tol):
    """Proximal gradient on 0.5 a'Ka - y'a + lam * pen(a).

    Returns (alpha, iterations, converged).
    """
    cdef Py_ssize_t n = y.shape[0]
    alpha_np = np.array(alpha0, dtype=float)
    cdef double[::1] alpha = alpha_np
    cdef double[::1] v = np.zeros(n)
    cdef double[::1] g = np.zeros(n)
    cdef double[::1] work = np.zeros(n)
    cdef double[::1] proj = np.zeros(n)
    cdef double tau = eta * lam, change, diff
    cdef long long it = 0
    cdef bint done = False
    cdef Py_ssize_t i
    with nogil:
        while it < max_iter:
            it += 1
            _matvec(K, &alpha[0], &g[0], n)
            for i in range(n):
                v[i] = alpha[i] - eta * (g[i] - y[i])
            if penalty == 0:
                _soft(&v[0], n, tau)
            else:
                _prox_linf(&v[0], n, tau, &work[0], &proj[0])
            change = 0.0
            for i in range(n):
                diff = fabs(v[i] - alpha[i])
                if diff > change:
                    change = diff
                alpha[i] = v[i]
            if change <= tol * eta:
                done = True
                break
    return alpha_np, int(it), bool(done)
