"""Cumulative-loss weighted ensemble of the six base models."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import RatingMatrix, format_value
from .metrics import ENSEMBLE, MetricsRow, base_predictions, combine, report
from .model import (
    ALL_KINDS,
    CheckpointError,
    DivergenceError,
    FactorState,
    Hyperparams,
    init_state,
    load_checkpoint,
    save_checkpoint,
)
from .sgd import run_epoch

NUM_MODELS = len(ALL_KINDS)


def partial_loss(state: FactorState, train: RatingMatrix) -> float:
    """Summed absolute training error of one base model, whatever its own loss."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    pred = state.predict_many(train.rows, train.cols)
    pl = float(np.sum(np.abs(train.values - pred)))
    if not math.isfinite(pl):
        raise DivergenceError(f"partial loss of {state.kind.label} is not finite", state.kind)
    return pl


def accumulate(cl_prev: float, pl: float) -> float:
    if pl < 0:
        raise ValueError("partial loss must be non-negative")
    return cl_prev + pl


def weights(cl: Sequence[float], zeta: float) -> np.ndarray:
    """Softmax of ``-zeta * cl``, shifted by the minimum before exponentiating."""
    z = zeta * np.asarray(cl, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValueError("cumulative losses must be finite")
    if zeta < 0:
        raise ValueError("zeta must be >= 0")
    e = np.exp(-(z - z.min()))
    return e / e.sum()


def ensemble_predict(states: Sequence[FactorState], alpha: Sequence[float], m: int, n: int) -> float:
    preds = np.array([[s.predict(m, n)] for s in states])
    return float(combine(alpha, preds)[0])


def ensemble_predict_many(states, alpha, rows, cols) -> np.ndarray:
    preds = np.vstack([s.predict_many(rows, cols) for s in states])
    return combine(alpha, preds)


@dataclass
class EnsembleState:
    cl: np.ndarray
    alpha: np.ndarray
    zeta: float
    epoch: int = 0

    @classmethod
    def initial(cls, zeta: float) -> "EnsembleState":
        cl = np.zeros(NUM_MODELS)
        return cls(cl, weights(cl, zeta), zeta, 0)

    def update(self, pls: Sequence[float]) -> None:
        self.cl = np.array([accumulate(c, p) for c, p in zip(self.cl, pls)])
        self.alpha = weights(self.cl, self.zeta)
        self.epoch += 1


@dataclass
class TrainingHistory:
    rows: list[MetricsRow] = field(default_factory=list)

    def epoch_rows(self, t: int) -> list[MetricsRow]:
        return [r for r in self.rows if r.epoch == t]

    def alpha_trajectory(self) -> np.ndarray:
        """(epochs, 6) array of per-epoch weights."""
        out: dict[int, list[float]] = {}
        for r in self.rows:
            if r.predictor != ENSEMBLE:
                out.setdefault(r.epoch, []).append(r.alpha)
        return np.array([out[t] for t in sorted(out)]).reshape(-1, NUM_MODELS)


def _epoch_rows(t, states, ens, pls, test, clamp) -> list[MetricsRow]:
    preds = base_predictions(states, test, clamp)
    rows = []
    for k, s in enumerate(states):
        rep = report(s.kind.label, test.values, preds[k])
        rows.append(MetricsRow(t, s.kind.label, pls[k], float(ens.cl[k]), float(ens.alpha[k]),
                               rep.rmse, rep.mae))
    rep = report(ENSEMBLE, test.values, combine(ens.alpha, preds))
    rows.append(MetricsRow(t, ENSEMBLE, None, None, float(np.sum(ens.alpha)), rep.rmse, rep.mae))
    return rows


def train_ensemble(
    train: RatingMatrix,
    test: RatingMatrix,
    hp: Hyperparams,
    *,
    workers: int | None = None,
    on_epoch: Callable[[int, list[MetricsRow]], None] | None = None,
    clamp: tuple[float, float] | None = None,
) -> tuple[list[FactorState], EnsembleState, TrainingHistory]:
    """Train the six base models side by side and adapt their ensemble weights.

    Each epoch every model makes one SGD pass over ``train``; after all six
    finish, their absolute training errors are added to the cumulative
    losses, the weights are recomputed and per-model plus ensemble test
    metrics are recorded.  ``on_epoch`` receives each epoch's rows as soon
    as they exist.
    """
    if len(train) == 0:
        raise ValueError("training set is empty")
    if len(test) == 0:
        raise ValueError("test set is empty")
    if train.shape != test.shape:
        raise ValueError(f"train {train.shape} and test {test.shape} dimensions differ")
    states = [init_state(train.num_rows, train.num_cols, k, hp) for k in ALL_KINDS]
    ens = EnsembleState.initial(hp.resolve_zeta(len(train)))
    history = TrainingHistory()
    if workers is None:
        workers = min(NUM_MODELS, os.cpu_count() or 1)

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t in range(1, hp.epochs + 1):
            if pool is None:
                for s in states:
                    run_epoch(s, train, hp, t)
            else:
                futures = [pool.submit(run_epoch, s, train, hp, t) for s in states]
                for f in futures:
                    f.result()
            pls = [partial_loss(s, train) for s in states]
            ens.update(pls)
            rows = _epoch_rows(t, states, ens, pls, test, clamp)
            history.rows.extend(rows)
            if on_epoch is not None:
                on_epoch(t, rows)
    finally:
        if pool is not None:
            pool.shutdown()
    return states, ens, history


# -- checkpoints ----------------------------------------------------------

ENSEMBLE_FILE = "ensemble.txt"


def model_file(kind) -> str:
    return f"model_k{int(kind)}.txt"


def format_ensemble(ens: EnsembleState) -> str:
    return (
        f"zeta={format_value(ens.zeta)}\n"
        f"epoch={ens.epoch}\n"
        f"cl={' '.join(format_value(v) for v in ens.cl.tolist())}\n"
        f"alpha={' '.join(format_value(v) for v in ens.alpha.tolist())}\n"
    )


def parse_ensemble(text: str) -> EnsembleState:
    fields: dict[str, str] = {}
    for line in text.splitlines():
        if "=" not in line:
            raise CheckpointError(f"malformed ensemble line {line!r}")
        key, value = line.split("=", 1)
        fields[key] = value
    missing = {"zeta", "epoch", "cl", "alpha"} - set(fields)
    if missing:
        raise CheckpointError(f"ensemble checkpoint lacks {sorted(missing)}")
    try:
        cl = np.array([float(x) for x in fields["cl"].split()])
        alpha = np.array([float(x) for x in fields["alpha"].split()])
        zeta = float(fields["zeta"])
        epoch = int(fields["epoch"])
    except ValueError:
        raise CheckpointError("non-numeric value in ensemble checkpoint") from None
    if cl.size != NUM_MODELS or alpha.size != NUM_MODELS:
        raise CheckpointError("ensemble checkpoint needs six cl and six alpha values")
    return EnsembleState(cl, alpha, zeta, epoch)


def save_model_dir(directory, states: Sequence[FactorState], ens: EnsembleState) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in states:
        save_checkpoint(s, directory / model_file(s.kind))
    (directory / ENSEMBLE_FILE).write_text(format_ensemble(ens), encoding="utf-8")


def load_model_dir(directory) -> tuple[list[FactorState], EnsembleState]:
    directory = Path(directory)
    states = [load_checkpoint(directory / model_file(k)) for k in ALL_KINDS]
    for k, s in zip(ALL_KINDS, states):
        if s.kind != k:
            raise CheckpointError(f"{model_file(k)} holds kind {int(s.kind)}")
        if s.P.shape != states[0].P.shape or s.Q.shape != states[0].Q.shape:
            raise CheckpointError("base model checkpoints disagree on dimensions")
    path = directory / ENSEMBLE_FILE
    if not path.exists():
        raise CheckpointError(f"missing checkpoint {path}")
    ens = parse_ensemble(path.read_text(encoding="utf-8"))
    return states, ens
