"""RMSE / MAE evaluation for single base models and the ensemble."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import RatingMatrix
from .model import FactorState

ENSEMBLE = "ensemble"


def _errors(actual, predicted) -> np.ndarray:
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape:
        raise ValueError("actual and predicted differ in length")
    if actual.size == 0:
        raise ValueError("cannot evaluate an empty set")
    if not (np.isfinite(actual).all() and np.isfinite(predicted).all()):
        raise ValueError("non-finite value in evaluation input")
    return actual - predicted


def rmse(actual, predicted) -> float:
    err = _errors(actual, predicted)
    return math.sqrt(float(np.dot(err, err)) / err.size)


def mae(actual, predicted) -> float:
    err = _errors(actual, predicted)
    return float(np.sum(np.abs(err))) / err.size


@dataclass(frozen=True)
class EvalReport:
    predictor: str
    rmse: float
    mae: float
    count: int


def report(predictor: str, actual, predicted) -> EvalReport:
    return EvalReport(predictor, rmse(actual, predicted), mae(actual, predicted), len(actual))


def combine(alpha: Sequence[float], preds: np.ndarray) -> np.ndarray:
    """Weighted sum over the first axis of ``preds``, accumulated in model order."""
    alpha = np.asarray(alpha, dtype=np.float64)
    preds = np.asarray(preds, dtype=np.float64)
    if alpha.shape[0] != preds.shape[0]:
        raise ValueError("one weight per base model required")
    out = alpha[0] * preds[0]
    for a, p in zip(alpha[1:], preds[1:]):
        out = out + a * p
    return out


def base_predictions(
    states: Sequence[FactorState], test: RatingMatrix, clamp: tuple[float, float] | None = None
) -> np.ndarray:
    """(6, |test|) matrix of base-model predictions."""
    preds = np.vstack([s.predict_many(test.rows, test.cols) for s in states])
    if clamp is not None:
        preds = np.clip(preds, clamp[0], clamp[1])
    return preds


def evaluate_all(
    states: Sequence[FactorState],
    alpha: Sequence[float],
    test: RatingMatrix,
    clamp: tuple[float, float] | None = None,
) -> list[EvalReport]:
    """Reports for the six base models followed by the ensemble.

    With ``clamp`` the base predictions are clipped to ``[lo, hi]`` before
    being combined.
    """
    if len(test) == 0:
        raise ValueError("test set is empty")
    preds = base_predictions(states, test, clamp)
    out = [report(s.kind.label, test.values, p) for s, p in zip(states, preds)]
    combined = combine(alpha, preds)
    out.append(report(ENSEMBLE, test.values, combined))
    return out


# -- metrics CSV ----------------------------------------------------------

CSV_HEADER = "epoch,predictor,pl,cl,alpha,test_rmse,test_mae"


@dataclass(frozen=True)
class MetricsRow:
    """One (epoch, predictor) line; ``pl``/``cl`` are None for the ensemble."""

    epoch: int
    predictor: str
    pl: float | None
    cl: float | None
    alpha: float
    test_rmse: float
    test_mae: float


def _num(v: float | None) -> str:
    return "" if v is None else f"{v:.10g}"


def format_metrics_row(row: MetricsRow) -> str:
    return ",".join([
        str(row.epoch), row.predictor, _num(row.pl), _num(row.cl),
        _num(row.alpha), _num(row.test_rmse), _num(row.test_mae),
    ])


def parse_metrics_csv(text: str) -> list[MetricsRow]:
    lines = text.splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("not a metrics CSV (header mismatch)")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 7:
            raise ValueError(f"line {lineno}: expected 7 fields")
        opt = [None if x == "" else float(x) for x in parts[2:]]
        rows.append(MetricsRow(int(parts[0]), parts[1], opt[0], opt[1], opt[2], opt[3], opt[4]))
    return rows
