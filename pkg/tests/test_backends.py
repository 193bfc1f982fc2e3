import os
import subprocess
import sys

import numpy as np
import pytest

from mmlf import _backend, _kernels_py
from mmlf.model import ALL_KINDS, Hyperparams, Loss, init_state
from mmlf.sgd import epoch_order

compiled = pytest.importorskip("mmlf._kernels", reason="compiled extension not built")


def _problem(kind, seed=0, rows=30, cols=25, n=200, d=5):
    rng = np.random.default_rng(seed)
    cells = rng.choice(rows * cols, size=n, replace=False)
    r = (cells // cols).astype(np.int64)
    c = (cells % cols).astype(np.int64)
    v = rng.normal(3.0, 1.5, size=n)
    state = init_state(rows, cols, kind, Hyperparams(d=d, init_scale=0.3, seed=seed))
    return state, r, c, v, epoch_order(n, seed, kind, 1)


def _arrays(state):
    return [state.P.copy(), state.Q.copy(), state.b_row.copy(), state.b_col.copy()]


@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("eta,lam", [(0.01, 0.05), (0.1, 0.0), (0.003, 0.9)])
def test_epoch_bit_identical(kind, eta, lam):
    state, r, c, v, order = _problem(kind)
    a, b = _arrays(state), _arrays(state)
    for _ in range(3):
        ra = compiled.run_epoch(int(kind), *a, r, c, v, order, eta, lam, 1e-12)
        rb = _kernels_py.run_epoch(int(kind), *b, r, c, v, order, eta, lam, 1e-12)
        assert ra == rb == -1
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_single_update_identical(kind):
    state, r, c, v, _ = _problem(kind, seed=4)
    a, b = _arrays(state), _arrays(state)
    for j in range(20):
        ok_a = compiled.sgd_update(int(kind), *a, r[j], c[j], v[j], 0.05, 0.1, 1e-12)
        ok_b = _kernels_py.sgd_update(int(kind), *b, r[j], c[j], v[j], 0.05, 0.1, 1e-12)
        assert ok_a == ok_b
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_divergence_reported_at_same_position(kind):
    state, r, c, _, order = _problem(kind, n=50)
    v = np.full(50, 1e300)
    a, b = _arrays(state), _arrays(state)
    pa = compiled.run_epoch(int(kind), *a, r, c, v, order, 1e10, 0.0, 1e-12)
    pb = _kernels_py.run_epoch(int(kind), *b, r, c, v, order, 1e10, 0.0, 1e-12)
    assert pa == pb
    if kind.loss is Loss.L2:  # the bounded-gradient losses stay finite here
        assert pa >= 0


def test_default_prefers_compiled():
    if os.environ.get("MMLF_BACKEND", "").lower() != "python":
        assert _backend.NAME == "cython"


def test_env_forces_python():
    env = dict(os.environ, MMLF_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import mmlf; print(mmlf.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
