"""Sparse rating matrices: parsing, statistics, splitting and serialization.

A :class:`RatingMatrix` stores the observed cells of a (num_rows x num_cols)
matrix in COO form.  When it was parsed with id remapping, ``row_ids`` and
``col_ids`` hold the raw identifiers in dense-index order so results can be
reported in the caller's id space.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

DELIMITERS = {"tab": "\t", "comma": ",", "double-colon": "::"}


class RatingFormatError(ValueError):
    """Raised for unparsable or inconsistent rating input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RatingEntry(NamedTuple):
    row: int
    col: int
    value: float


@dataclass(frozen=True, eq=False)
class RatingMatrix:
    num_rows: int
    num_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    row_ids: tuple[str, ...] | None = field(default=None)
    col_ids: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)
        if self.num_rows < 0 or self.num_cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        if not (rows.ndim == cols.ndim == values.ndim == 1) or not (
            rows.size == cols.size == values.size
        ):
            raise ValueError("rows, cols and values must be 1-d arrays of equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.num_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= self.num_cols:
                raise ValueError("column index out of range")
            if not np.all(np.isfinite(values)):
                raise ValueError("ratings must be finite")
            keys = rows * self.num_cols + cols
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate (row, col) pair")
        if self.row_ids is not None and len(self.row_ids) != self.num_rows:
            raise ValueError("row_ids length does not match num_rows")
        if self.col_ids is not None and len(self.col_ids) != self.num_cols:
            raise ValueError("col_ids length does not match num_cols")

    def __len__(self) -> int:
        return int(self.values.size)

    def __iter__(self) -> Iterator[RatingEntry]:
        for r, c, v in zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()):
            yield RatingEntry(r, c, v)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RatingMatrix):
            return NotImplemented
        return (
            self.num_rows == other.num_rows
            and self.num_cols == other.num_cols
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values, other.values)
            and self.row_ids == other.row_ids
            and self.col_ids == other.col_ids
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_rows, self.num_cols

    def take(self, index: np.ndarray) -> "RatingMatrix":
        """Sub-matrix of the entries at ``index``, keeping dimensions and id tables."""
        return RatingMatrix(
            self.num_rows,
            self.num_cols,
            self.rows[index],
            self.cols[index],
            self.values[index],
            self.row_ids,
            self.col_ids,
        )


def from_entries(
    entries: Sequence[tuple[int, int, float]], num_rows: int, num_cols: int
) -> RatingMatrix:
    arr = list(entries)
    return RatingMatrix(
        num_rows,
        num_cols,
        np.array([e[0] for e in arr], dtype=np.int64),
        np.array([e[1] for e in arr], dtype=np.int64),
        np.array([e[2] for e in arr], dtype=np.float64),
    )


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, str):
        return source
    if isinstance(source, os.PathLike):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _split_line(line: str, delim: str) -> list[str]:
    parts = line.split(delim)
    if delim == "\t" and len(parts) < 3:
        # tolerate space-separated files declared as tab
        parts = line.split()
    return [p.strip() for p in parts]


def parse_ratings(
    source,
    format: str = "tab",
    id_remap: bool = True,
    *,
    row_ids: Sequence[str] | None = None,
    col_ids: Sequence[str] | None = None,
    num_rows: int | None = None,
    num_cols: int | None = None,
) -> RatingMatrix:
    """Parse ``user<delim>item<delim>rating[<delim>...]`` lines.

    ``source`` may be bytes, a str holding the text, an open file, or an
    ``os.PathLike``.  Blank lines and lines starting with ``#`` are skipped.

    With ``id_remap`` raw ids are mapped to dense indices in first-seen
    order.  ``row_ids``/``col_ids`` seed that mapping (ids already known
    keep their index, new ids are appended).  Without remapping, ids must
    be non-negative integers and are used directly as indices; the
    dimensions default to ``max index + 1``.
    """
    if format not in DELIMITERS:
        raise ValueError(f"unknown format {format!r}; expected one of {sorted(DELIMITERS)}")
    delim = DELIMITERS[format]
    text = _read_text(source)

    row_index: dict[str, int] = {rid: i for i, rid in enumerate(row_ids or ())}
    col_index: dict[str, int] = {cid: i for i, cid in enumerate(col_ids or ())}
    rows: list[int] = []
    cols: list[int] = []
    values: list[float] = []
    seen: dict[tuple[int, int], int] = {}

    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = _split_line(line, delim)
        if len(fields) < 3 or not fields[0] or not fields[1]:
            raise RatingFormatError(f"expected at least 3 fields, got {len(fields)}", lineno)
        user, item, rating = fields[0], fields[1], fields[2]
        try:
            value = float(rating)
        except ValueError:
            raise RatingFormatError(f"rating {rating!r} is not a number", lineno) from None
        if not math.isfinite(value):
            raise RatingFormatError(f"rating {rating!r} is not finite", lineno)
        if id_remap:
            r = row_index.setdefault(user, len(row_index))
            c = col_index.setdefault(item, len(col_index))
        else:
            try:
                r, c = int(user), int(item)
            except ValueError:
                raise RatingFormatError("ids must be integers without remapping", lineno) from None
            if r < 0 or c < 0:
                raise RatingFormatError("ids must be non-negative without remapping", lineno)
        if (r, c) in seen:
            raise RatingFormatError(
                f"duplicate pair ({user}, {item}), first seen on line {seen[(r, c)]}", lineno
            )
        seen[(r, c)] = lineno
        rows.append(r)
        cols.append(c)
        values.append(value)

    if not values:
        raise RatingFormatError("no ratings in input")

    if id_remap:
        n_rows, n_cols = len(row_index), len(col_index)
        rid = tuple(row_index)
        cid = tuple(col_index)
    else:
        n_rows = max(rows) + 1 if num_rows is None else num_rows
        n_cols = max(cols) + 1 if num_cols is None else num_cols
        rid = cid = None
        if max(rows) >= n_rows or max(cols) >= n_cols:
            raise RatingFormatError("index exceeds the declared dimensions")
    return RatingMatrix(n_rows, n_cols, rows, cols, values, rid, cid)


def density(matrix: RatingMatrix) -> float:
    """Fraction of observed cells."""
    return density_from_counts(matrix.num_rows, matrix.num_cols, len(matrix))


def density_from_counts(num_rows: int, num_cols: int, num_entries: int) -> float:
    if num_rows <= 0 or num_cols <= 0:
        raise ValueError("density needs positive dimensions")
    return num_entries / (num_rows * num_cols)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def split(matrix: RatingMatrix, spec: SplitSpec) -> tuple[RatingMatrix, RatingMatrix]:
    """Random per-entry train/test partition, deterministic in ``spec.seed``.

    Both parts keep the parent's dimensions and id tables; each keeps the
    source order of its entries.
    """
    n = len(matrix)
    if n == 0:
        raise ValueError("cannot split an empty matrix")
    n_train = int(round(spec.train_fraction * n))
    if n_train < 1 or n_train > n - 1:
        raise ValueError(
            f"train_fraction {spec.train_fraction} leaves an empty partition for {n} entries"
        )
    perm = np.random.default_rng(spec.seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return matrix.take(train_idx), matrix.take(test_idx)


def format_value(v: float) -> str:
    """17 significant digits: exact round trip for float64."""
    return f"{v:.17g}"


def short_float(v: float) -> str:
    """Shortest text that parses back to ``v``; integral values lose the ``.0``."""
    text = repr(float(v))
    return text[:-2] if text.endswith(".0") else text


def format_ratings(matrix: RatingMatrix, format: str = "tab") -> str:
    """Serialize in the input line format, writing raw ids when the matrix has them."""
    delim = DELIMITERS[format]
    rid = matrix.row_ids
    cid = matrix.col_ids
    lines = []
    for r, c, v in zip(matrix.rows.tolist(), matrix.cols.tolist(), matrix.values.tolist()):
        u = rid[r] if rid is not None else str(r)
        i = cid[c] if cid is not None else str(c)
        lines.append(f"{u}{delim}{i}{delim}{short_float(v)}\n")
    return "".join(lines)


def write_ratings(matrix: RatingMatrix, path, format: str = "tab") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_ratings(matrix, format))


def write_id_map(ids: Sequence[str], path) -> None:
    """Write ``raw_id<TAB>dense_index`` lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, raw in enumerate(ids):
            fh.write(f"{raw}\t{i}\n")


def read_id_map(path) -> tuple[str, ...]:
    ids: dict[int, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise RatingFormatError("expected raw_id<TAB>dense_index", lineno)
            try:
                idx = int(parts[1])
            except ValueError:
                raise RatingFormatError(f"bad dense index {parts[1]!r}", lineno) from None
            if idx in ids:
                raise RatingFormatError(f"dense index {idx} repeated", lineno)
            ids[idx] = parts[0]
    if sorted(ids) != list(range(len(ids))):
        raise RatingFormatError(f"{path}: dense indices are not contiguous from 0")
    return tuple(ids[i] for i in range(len(ids)))
