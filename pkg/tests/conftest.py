import numpy as np
import pytest

from mmlf.data import RatingEntry, RatingMatrix, SplitSpec, split
from mmlf.model import BaseModelKind, FactorState, Hyperparams, Loss, Space

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def planted_instance(seed: int = 0, rows: int = 200, cols: int = 150, rank: int = 3,
                     observed: float = 0.10, noise: float = 0.01) -> RatingMatrix:
    """Low-rank matrix with uniform [0, 1] factors, a random observed subset and Gaussian noise."""
    rng = np.random.default_rng(seed)
    U = rng.uniform(0.0, 1.0, (rows, rank))
    V = rng.uniform(0.0, 1.0, (cols, rank))
    n_obs = int(round(observed * rows * cols))
    keys = np.sort(rng.choice(rows * cols, n_obs, replace=False))
    r, c = keys // cols, keys % cols
    values = (U @ V.T)[r, c] + rng.normal(0.0, noise, n_obs)
    return RatingMatrix(rows, cols, r, c, values)


def well_conditioned_point(kind, rng, d=4):
    """Random (state, entry, hp) away from every kink of ``kind``'s loss."""
    kind = BaseModelKind(kind)
    while True:
        p, q = rng.normal(size=d), rng.normal(size=d)
        if kind.space is Space.DISTANCE and np.linalg.norm(p - q) < 0.1:
            continue
        bm, bn = rng.normal(scale=0.5, size=2)
        pred = p @ q if kind.space is Space.INNER else np.linalg.norm(p - q)
        if kind.loss is Loss.SMOOTH_L1 and rng.random() < 0.5:
            delta = rng.uniform(-0.95, 0.95)
        else:
            delta = rng.choice([-1, 1]) * rng.uniform(1.05, 3.0)
        state = FactorState(p[None, :], q[None, :], np.array([bm]), np.array([bn]), kind)
        hp = Hyperparams(eta=0.01, lam=float(rng.uniform(0, 0.1)), d=d)
        return state, RatingEntry(0, 0, float(pred + bm + bn + delta)), hp


@pytest.fixture(scope="session")
def planted_split():
    return split(planted_instance(0), SplitSpec(0.8, 0))


@pytest.fixture
def toy_matrix():
    rng = np.random.default_rng(11)
    keys = rng.choice(12 * 9, 40, replace=False)
    return RatingMatrix(12, 9, keys // 9, keys % 9, rng.integers(1, 6, 40).astype(float))


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def record(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}: {detail}")
