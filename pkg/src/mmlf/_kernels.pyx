# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-entry SGD kernels.

Mirrors ``_kernels_py`` operation for operation so both backends produce the
same floating-point results.
"""
from libc.math cimport sqrt, isfinite

NAME = "cython"


cdef inline double _coef(int loss, double delta) noexcept nogil:
    # loss: 0 = L1, 1 = L2, 2 = smooth L1
    if loss == 0:
        return 1.0 if delta >= 0.0 else -1.0
    if loss == 1:
        return delta
    if delta > 1.0:
        return 1.0
    if delta < -1.0:
        return -1.0
    return 2.0 * delta


cdef int _step(int kind, double[:, ::1] P, double[:, ::1] Q,
               double[::1] b_row, double[::1] b_col,
               Py_ssize_t m, Py_ssize_t n, double h,
               double eta, double lam, double eps) noexcept nogil:
    cdef Py_ssize_t j, d = P.shape[1]
    cdef double s = 0.0, t, pj, qj, u, pred, delta, g, step, denom, chk = 0.0
    cdef double decay = 1.0 - eta * lam
    cdef bint inner = kind <= 3
    cdef int loss = (kind - 1) % 3

    if inner:
        for j in range(d):
            s += P[m, j] * Q[n, j]
        pred = s
        denom = 1.0
    else:
        for j in range(d):
            t = P[m, j] - Q[n, j]
            s += t * t
        pred = sqrt(s)
        denom = pred if pred > eps else eps

    delta = h - pred - b_row[m] - b_col[n]
    g = _coef(loss, delta)
    step = eta * g

    if inner:
        for j in range(d):
            pj = P[m, j]
            qj = Q[n, j]
            P[m, j] = decay * pj + step * qj
            Q[n, j] = decay * qj + step * pj
            chk += P[m, j] + Q[n, j]
    else:
        for j in range(d):
            pj = P[m, j]
            qj = Q[n, j]
            u = (pj - qj) / denom
            P[m, j] = decay * pj + step * u
            Q[n, j] = decay * qj - step * u
            chk += P[m, j] + Q[n, j]
    b_row[m] = decay * b_row[m] + step
    b_col[n] = decay * b_col[n] + step
    chk += b_row[m] + b_col[n] + delta
    return 1 if isfinite(chk) else 0


def sgd_update(int kind, double[:, ::1] P, double[:, ::1] Q,
               double[::1] b_row, double[::1] b_col,
               Py_ssize_t m, Py_ssize_t n, double h,
               double eta, double lam, double eps):
    """Apply one update in place; return False if the result is not finite."""
    return bool(_step(kind, P, Q, b_row, b_col, m, n, h, eta, lam, eps))


def run_epoch(int kind, double[:, ::1] P, double[:, ::1] Q,
              double[::1] b_row, double[::1] b_col,
              const long long[::1] rows, const long long[::1] cols,
              const double[::1] values, const long long[::1] order,
              double eta, double lam, double eps):
    """Visit ``order`` once; return -1, or the position of the first non-finite step."""
    cdef Py_ssize_t i, e, n_steps = order.shape[0]
    cdef Py_ssize_t failed = -1
    with nogil:
        for i in range(n_steps):
            e = order[i]
            if not _step(kind, P, Q, b_row, b_col, rows[e], cols[e], values[e],
                         eta, lam, eps):
                failed = i
                break
    return failed
