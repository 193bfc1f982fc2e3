"""Pure-Python per-entry SGD kernels (fallback when the extension is missing).

Same arithmetic, in the same order, as ``_kernels.pyx``.
"""
import math

NAME = "python"


def _coef(loss, delta):
    if loss == 0:
        return 1.0 if delta >= 0.0 else -1.0
    if loss == 1:
        return delta
    if delta > 1.0:
        return 1.0
    if delta < -1.0:
        return -1.0
    return 2.0 * delta


def _step(kind, p, q, bm, bn, h, eta, lam, eps):
    # p, q: Python lists, updated in place; returns new (bm, bn, delta)
    d = len(p)
    decay = 1.0 - eta * lam
    inner = kind <= 3
    s = 0.0
    if inner:
        for j in range(d):
            s += p[j] * q[j]
        pred = s
        denom = 1.0
    else:
        for j in range(d):
            t = p[j] - q[j]
            s += t * t
        pred = math.sqrt(s)
        denom = pred if pred > eps else eps

    delta = h - pred - bm - bn
    step = eta * _coef((kind - 1) % 3, delta)

    if inner:
        for j in range(d):
            pj = p[j]
            qj = q[j]
            p[j] = decay * pj + step * qj
            q[j] = decay * qj + step * pj
    else:
        for j in range(d):
            pj = p[j]
            qj = q[j]
            u = (pj - qj) / denom
            p[j] = decay * pj + step * u
            q[j] = decay * qj - step * u
    return decay * bm + step, decay * bn + step, delta


def _finite(p, q, bm, bn, delta):
    return math.isfinite(sum(p) + sum(q) + bm + bn + delta)


def sgd_update(kind, P, Q, b_row, b_col, m, n, h, eta, lam, eps):
    """Apply one update in place; return False if the result is not finite."""
    p = P[m].tolist()
    q = Q[n].tolist()
    bm, bn, delta = _step(kind, p, q, float(b_row[m]), float(b_col[n]), float(h),
                          eta, lam, eps)
    P[m] = p
    Q[n] = q
    b_row[m] = bm
    b_col[n] = bn
    return _finite(p, q, bm, bn, delta)


def run_epoch(kind, P, Q, b_row, b_col, rows, cols, values, order, eta, lam, eps):
    """Visit ``order`` once; return -1, or the position of the first non-finite step."""
    # work on list-of-lists copies; numpy scalar indexing is far slower
    Pl = P.tolist()
    Ql = Q.tolist()
    bml = b_row.tolist()
    bnl = b_col.tolist()
    rl = rows.tolist()
    cl = cols.tolist()
    vl = values.tolist()
    failed = -1
    for i, e in enumerate(order.tolist()):
        m = rl[e]
        n = cl[e]
        p = Pl[m]
        q = Ql[n]
        bm, bn, delta = _step(kind, p, q, bml[m], bnl[n], vl[e], eta, lam, eps)
        bml[m] = bm
        bnl[n] = bn
        if not _finite(p, q, bm, bn, delta):
            failed = i
            break
    P[...] = Pl
    Q[...] = Ql
    b_row[...] = bml
    b_col[...] = bnl
    return failed
