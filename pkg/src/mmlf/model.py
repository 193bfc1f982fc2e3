"""Base latent-factor models: kinds, hyperparameters, factor state and checkpoints."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import RatingMatrix, format_value


class Space(enum.Enum):
    INNER = "inner"
    DISTANCE = "distance"


class Loss(enum.Enum):
    L1 = "l1"
    L2 = "l2"
    SMOOTH_L1 = "smooth_l1"


class BaseModelKind(enum.IntEnum):
    """The six (embedding space, loss) pairings, numbered 1..6."""

    INNER_L1 = 1
    INNER_L2 = 2
    INNER_SMOOTH_L1 = 3
    DISTANCE_L1 = 4
    DISTANCE_L2 = 5
    DISTANCE_SMOOTH_L1 = 6

    @property
    def space(self) -> Space:
        return Space.INNER if self.value <= 3 else Space.DISTANCE

    @property
    def loss(self) -> Loss:
        return (Loss.L1, Loss.L2, Loss.SMOOTH_L1)[(self.value - 1) % 3]

    @property
    def label(self) -> str:
        return f"k{self.value}"

    @classmethod
    def of(cls, space: Space, loss: Loss) -> "BaseModelKind":
        offset = 0 if space is Space.INNER else 3
        return cls(offset + (Loss.L1, Loss.L2, Loss.SMOOTH_L1).index(loss) + 1)


ALL_KINDS = tuple(BaseModelKind)


class DivergenceError(ArithmeticError):
    """Training produced a non-finite value."""

    def __init__(self, message: str, kind: BaseModelKind | None = None,
                 epoch: int | None = None, entry: int | None = None):
        self.kind = kind
        self.epoch = epoch
        self.entry = entry
        super().__init__(message)


@dataclass(frozen=True)
class Hyperparams:
    eta: float = 0.01
    lam: float = 0.05
    d: int = 20
    zeta: float | None = None  # None: 1 / number of training entries
    epochs: int = 50
    seed: int = 0
    init_scale: float = 0.05
    dist_eps: float = 1e-12

    def __post_init__(self):
        for name in ("eta", "lam", "init_scale", "dist_eps"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.eta * self.lam >= 1:
            raise ValueError(
                f"eta*lambda = {self.eta * self.lam:g} >= 1 flips the sign of every parameter"
            )
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.zeta is not None and not (math.isfinite(self.zeta) and self.zeta >= 0):
            raise ValueError("zeta must be finite and >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")
        if self.dist_eps <= 0:
            raise ValueError("dist_eps must be > 0")

    def resolve_zeta(self, num_train: int) -> float:
        if self.zeta is not None:
            return self.zeta
        if num_train <= 0:
            raise ValueError("cannot derive zeta from an empty training set")
        return 1.0 / num_train

    def with_(self, **changes) -> "Hyperparams":
        return replace(self, **changes)


@dataclass(eq=False)
class FactorState:
    """Embeddings and biases of one base model."""

    P: np.ndarray
    Q: np.ndarray
    b_row: np.ndarray
    b_col: np.ndarray
    kind: BaseModelKind

    def __post_init__(self):
        self.kind = BaseModelKind(self.kind)
        self.P = np.ascontiguousarray(self.P, dtype=np.float64)
        self.Q = np.ascontiguousarray(self.Q, dtype=np.float64)
        self.b_row = np.ascontiguousarray(self.b_row, dtype=np.float64)
        self.b_col = np.ascontiguousarray(self.b_col, dtype=np.float64)
        if self.P.ndim != 2 or self.Q.ndim != 2 or self.P.shape[1] != self.Q.shape[1]:
            raise ValueError("P and Q must be 2-d with the same latent dimension")
        if self.P.shape[1] < 1:
            raise ValueError("latent dimension must be >= 1")
        if self.b_row.shape != (self.P.shape[0],) or self.b_col.shape != (self.Q.shape[0],):
            raise ValueError("bias vectors do not match the factor matrices")

    @property
    def num_rows(self) -> int:
        return self.P.shape[0]

    @property
    def num_cols(self) -> int:
        return self.Q.shape[0]

    @property
    def d(self) -> int:
        return self.P.shape[1]

    def copy(self) -> "FactorState":
        return FactorState(self.P.copy(), self.Q.copy(), self.b_row.copy(),
                           self.b_col.copy(), self.kind)

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.P).all() and np.isfinite(self.Q).all()
            and np.isfinite(self.b_row).all() and np.isfinite(self.b_col).all()
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FactorState):
            return NotImplemented
        return (
            self.kind == other.kind
            and np.array_equal(self.P, other.P)
            and np.array_equal(self.Q, other.Q)
            and np.array_equal(self.b_row, other.b_row)
            and np.array_equal(self.b_col, other.b_col)
        )

    def predict(self, m: int, n: int) -> float:
        if not (0 <= m < self.num_rows and 0 <= n < self.num_cols):
            raise IndexError(f"({m}, {n}) outside a {self.num_rows}x{self.num_cols} model")
        return float(self.predict_many(np.array([m]), np.array([n]))[0])

    def predict_many(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        p = self.P[rows]
        q = self.Q[cols]
        if self.kind.space is Space.INNER:
            core = np.einsum("ij,ij->i", p, q)
        else:
            diff = p - q
            core = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        return core + self.b_row[rows] + self.b_col[cols]


def init_state(num_rows: int, num_cols: int, kind: BaseModelKind, hp: Hyperparams) -> FactorState:
    """Uniform factors on [-init_scale, init_scale], zero biases.

    The generator is seeded by ``(hp.seed, kind)`` so each base model starts
    from its own draw.
    """
    if num_rows <= 0 or num_cols <= 0:
        raise ValueError("model dimensions must be positive")
    kind = BaseModelKind(kind)
    rng = np.random.default_rng([hp.seed, int(kind)])
    P = (rng.random((num_rows, hp.d)) * 2.0 - 1.0) * hp.init_scale + 0.0
    Q = (rng.random((num_cols, hp.d)) * 2.0 - 1.0) * hp.init_scale + 0.0
    return FactorState(P, Q, np.zeros(num_rows), np.zeros(num_cols), kind)


def residual(h: float, h_hat: float) -> float:
    return h - h_hat


def entry_loss(kind: BaseModelKind, delta):
    """Per-entry loss of ``kind`` for residual(s) ``delta``."""
    loss = BaseModelKind(kind).loss
    a = np.abs(delta)
    if loss is Loss.L1:
        return a
    if loss is Loss.L2:
        return 0.5 * np.square(delta)
    return np.where(a > 1.0, a, np.square(delta))


def objective(state: FactorState, data: RatingMatrix, lam: float) -> float:
    """Training objective: summed per-entry loss plus the per-entry regularizer.

    Each observed entry contributes the squared norms of its own row and
    column parameters, so busy rows are penalized more than rare ones.
    """
    r, c = data.rows, data.cols
    if len(data) and (r.max() >= state.num_rows or c.max() >= state.num_cols):
        raise IndexError("data indices exceed the model dimensions")
    delta = data.values - state.predict_many(r, c)
    fit = float(np.sum(entry_loss(state.kind, delta)))
    row_sq = np.einsum("ij,ij->i", state.P, state.P) + state.b_row ** 2
    col_sq = np.einsum("ij,ij->i", state.Q, state.Q) + state.b_col ** 2
    reg = 0.5 * lam * float(np.sum(row_sq[r]) + np.sum(col_sq[c]))
    total = fit + reg
    if not math.isfinite(total):
        raise DivergenceError(f"objective of {state.kind.label} is not finite", state.kind)
    return total


# -- checkpoints ----------------------------------------------------------


class CheckpointError(ValueError):
    """Missing, truncated or inconsistent checkpoint file."""


def _fmt_row(values: np.ndarray) -> str:
    return " ".join(format_value(v) for v in values.tolist())


def format_checkpoint(state: FactorState) -> str:
    lines = [
        f"kind={int(state.kind)}",
        f"rows={state.num_rows}",
        f"cols={state.num_cols}",
        f"d={state.d}",
    ]
    lines.extend(_fmt_row(row) for row in state.P)
    lines.extend(_fmt_row(row) for row in state.Q)
    lines.append(_fmt_row(state.b_row))
    lines.append(_fmt_row(state.b_col))
    return "\n".join(lines) + "\n"


def save_checkpoint(state: FactorState, path) -> None:
    Path(path).write_text(format_checkpoint(state), encoding="utf-8")


def _header(lines: list[str], i: int, key: str) -> int:
    if i >= len(lines) or not lines[i].startswith(key + "="):
        raise CheckpointError(f"expected '{key}=' on line {i + 1}")
    try:
        return int(lines[i][len(key) + 1:])
    except ValueError:
        raise CheckpointError(f"bad value for {key!r} on line {i + 1}") from None


def _floats(line: str, expect: int, where: str) -> np.ndarray:
    parts = line.split()
    if len(parts) != expect:
        raise CheckpointError(f"{where}: expected {expect} values, found {len(parts)}")
    try:
        return np.array([float(x) for x in parts], dtype=np.float64)
    except ValueError:
        raise CheckpointError(f"{where}: non-numeric value") from None


def parse_checkpoint(text: str) -> FactorState:
    lines = text.splitlines()
    kind = _header(lines, 0, "kind")
    rows = _header(lines, 1, "rows")
    cols = _header(lines, 2, "cols")
    d = _header(lines, 3, "d")
    if kind not in range(1, 7) or rows < 1 or cols < 1 or d < 1:
        raise CheckpointError("invalid checkpoint header")
    body = lines[4:]
    if len(body) != rows + cols + 2:
        raise CheckpointError(
            f"expected {rows + cols + 2} body lines, found {len(body)} (truncated?)"
        )
    P = np.vstack([_floats(body[i], d, f"P row {i}") for i in range(rows)])
    Q = np.vstack([_floats(body[rows + j], d, f"Q row {j}") for j in range(cols)])
    b_row = _floats(body[rows + cols], rows, "b_row")
    b_col = _floats(body[rows + cols + 1], cols, "b_col")
    return FactorState(P, Q, b_row, b_col, BaseModelKind(kind))


def load_checkpoint(path) -> FactorState:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CheckpointError(f"missing checkpoint {path}") from None
    try:
        return parse_checkpoint(text)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
