"""Per-entry stochastic gradient training for the six base models."""
from __future__ import annotations

import numpy as np

from . import _backend
from .data import RatingEntry, RatingMatrix
from .model import (
    BaseModelKind,
    DivergenceError,
    FactorState,
    Hyperparams,
    Loss,
    Space,
    entry_loss,
)


def epoch_order(num_entries: int, seed: int, kind: BaseModelKind, t: int) -> np.ndarray:
    """Visit order of the training entries in epoch ``t`` (1-based) for ``kind``."""
    if t < 1:
        raise ValueError("epoch index starts at 1")
    rng = np.random.default_rng([seed, int(kind), t])
    return rng.permutation(num_entries).astype(np.int64)


def sgd_step(state: FactorState, entry: RatingEntry, hp: Hyperparams) -> FactorState:
    """Apply the update rule of ``state.kind`` for one observed entry, in place.

    All four right-hand sides read the parameters as they were before the
    step.  Returns ``state`` for chaining.
    """
    m, n, h = entry
    if not (0 <= m < state.num_rows and 0 <= n < state.num_cols):
        raise IndexError(f"entry ({m}, {n}) outside a {state.num_rows}x{state.num_cols} model")
    ok = _backend.kernels.sgd_update(
        int(state.kind), state.P, state.Q, state.b_row, state.b_col,
        int(m), int(n), float(h), hp.eta, hp.lam, hp.dist_eps,
    )
    if not ok:
        raise DivergenceError(
            f"{state.kind.label}: non-finite parameters after entry ({m}, {n})", state.kind
        )
    return state


def run_epoch(state: FactorState, train: RatingMatrix, hp: Hyperparams, t: int) -> FactorState:
    """One pass over ``train`` in the epoch's shuffled order, in place."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    if train.num_rows > state.num_rows or train.num_cols > state.num_cols:
        raise ValueError("training matrix is larger than the model")
    order = epoch_order(len(train), hp.seed, state.kind, t)
    failed = _backend.kernels.run_epoch(
        int(state.kind), state.P, state.Q, state.b_row, state.b_col,
        train.rows, train.cols, train.values, order,
        hp.eta, hp.lam, hp.dist_eps,
    )
    if failed >= 0:
        e = int(order[failed])
        raise DivergenceError(
            f"{state.kind.label} diverged in epoch {t} at entry "
            f"({int(train.rows[e])}, {int(train.cols[e])}), step {failed}",
            state.kind, t, e,
        )
    return state


def _entry_objective(kind, p, q, bm, bn, h, lam):
    if kind.space is Space.INNER:
        pred = float(p @ q)
    else:
        pred = float(np.linalg.norm(p - q))
    delta = h - pred - bm - bn
    return float(entry_loss(kind, delta)) + 0.5 * lam * (p @ p + q @ q + bm * bm + bn * bn)


def finite_diff_check(
    kind: BaseModelKind,
    entry: RatingEntry,
    state: FactorState,
    hp: Hyperparams,
    h: float = 1e-6,
    tol_margin: float = 1e-3,
) -> float:
    """Compare one SGD update against central differences of the entry objective.

    The analytic gradient is read off the update itself,
    ``(before - after) / eta``, which carries both the loss gradient and the
    ``lambda * theta`` decay term.  It is compared, over every coordinate of
    p_m, q_n, b_m and b_n, with central differences of
    ``loss(delta) + lambda/2 * (|p_m|^2 + |q_n|^2 + b_m^2 + b_n^2)``.
    Returns ``max|analytic - numeric| / max|numeric|``.
    """
    kind = BaseModelKind(kind)
    if hp.eta <= 0:
        raise ValueError("finite_diff_check needs eta > 0")
    m, n, value = entry
    p = state.P[m].copy()
    q = state.Q[n].copy()
    bm = float(state.b_row[m])
    bn = float(state.b_col[n])
    dist = float(np.linalg.norm(p - q))
    pred = float(p @ q) if kind.space is Space.INNER else dist
    delta = value - pred - bm - bn
    if kind.loss is Loss.L1 and abs(delta) <= tol_margin:
        raise ValueError(f"|delta| = {abs(delta):.3g} too close to the L1 kink")
    if kind.loss is Loss.SMOOTH_L1 and abs(abs(delta) - 1.0) <= tol_margin:
        raise ValueError(f"|delta| = {abs(delta):.3g} too close to the smooth-L1 switch")
    if kind.space is Space.DISTANCE and dist <= 1e-6:
        raise ValueError("p_m and q_n nearly coincide; distance gradient undefined")

    local = FactorState(p[None, :].copy(), q[None, :].copy(),
                        np.array([bm]), np.array([bn]), kind)
    sgd_step(local, RatingEntry(0, 0, value), hp)
    before = np.concatenate([p, q, [bm, bn]])
    after = np.concatenate([local.P[0], local.Q[0], local.b_row, local.b_col])
    analytic = (before - after) / hp.eta

    d = p.size

    def f(theta):
        return _entry_objective(kind, theta[:d], theta[d:2 * d], theta[2 * d],
                                theta[2 * d + 1], value, hp.lam)

    numeric = np.empty_like(before)
    for i in range(before.size):
        plus = before.copy()
        minus = before.copy()
        plus[i] += h
        minus[i] -= h
        numeric[i] = (f(plus) - f(minus)) / (2.0 * h)
    scale = max(float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)
