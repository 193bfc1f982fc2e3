"""Acceptance gates.

Each test records one ``[PASS]``/``[FAIL]`` line through the ``acceptance``
fixture (printed in the terminal summary) and then asserts.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from mmlf import cli
from mmlf.data import SplitSpec, density_from_counts, parse_ratings, split
from mmlf.ensemble import ensemble_predict_many, train_ensemble, weights
from mmlf.metrics import ENSEMBLE, base_predictions, evaluate_all, rmse
from mmlf.model import ALL_KINDS, Hyperparams, init_state
from mmlf.sgd import finite_diff_check, run_epoch

from conftest import planted_instance, well_conditioned_point

ROOT = Path(__file__).resolve().parents[1]


def _train_single(kind, train, hp):
    state = init_state(train.num_rows, train.num_cols, kind, hp)
    for t in range(1, hp.epochs + 1):
        run_epoch(state, train, hp, t)
    return state


def _test_rmse(state, test):
    return rmse(test.values, state.predict_many(test.rows, test.cols))


def test_gradient_oracle(acceptance):
    start = time.perf_counter()
    worst = {}
    for kind in ALL_KINDS:
        rng = np.random.default_rng(2024 + int(kind))
        worst[kind.label] = max(
            finite_diff_check(kind, entry, state, hp)
            for state, entry, hp in (well_conditioned_point(kind, rng, d=4) for _ in range(100))
        )
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-4 and elapsed < 5
    acceptance("gradient oracle", ok,
               f"max rel err {max(worst.values()):.2e} (< 1e-4), {elapsed:.2f}s (< 5s)")
    assert max(worst.values()) < 1e-4, worst
    assert elapsed < 5


def test_weight_algebra(acceptance):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    norm_err = shift_err = uniform_err = 0.0
    order_ok = True
    for _ in range(1000):
        cl = rng.uniform(0, 1e3, 6) * rng.choice([1e-3, 1.0, 1e3])
        zeta = rng.uniform(0, 1) / cl.max()
        a = weights(cl, zeta)
        norm_err = max(norm_err, abs(a.sum() - 1.0))
        uniform_err = max(uniform_err, float(np.abs(weights(cl, 0.0) - 1 / 6).max()))
        c = rng.uniform(-1e3, 1e3)
        shift_err = max(shift_err, float(np.abs(weights(cl + c, zeta) - a).max()))
        idx = np.argsort(cl)
        order_ok &= bool(np.all(np.diff(a[idx]) <= 0))
        # strictly larger weight wherever the gap is resolvable
        gaps = np.diff(cl[idx]) * zeta > 1e-9
        order_ok &= bool(np.all(np.diff(a[idx])[gaps] < 0))
    elapsed = time.perf_counter() - start
    ok = max(norm_err, shift_err, uniform_err) <= 1e-12 and order_ok and elapsed < 1
    acceptance("weight algebra", ok,
               f"sum err {norm_err:.1e}, shift err {shift_err:.1e}, zeta=0 err "
               f"{uniform_err:.1e}, order {'ok' if order_ok else 'violated'}, {elapsed:.2f}s")
    assert norm_err <= 1e-12 and shift_err <= 1e-12 and uniform_err <= 1e-12
    assert order_ok and elapsed < 1


def test_ensemble_bounds(acceptance, planted_split):
    train, test = planted_split
    start = time.perf_counter()
    states, ens, _ = train_ensemble(train, test, Hyperparams(d=4, epochs=20, eta=0.02, lam=0.01))
    preds = base_predictions(states, test)
    combined = ensemble_predict_many(states, ens.alpha, test.rows, test.cols)
    slack = 1e-12 * np.abs(preds).max(axis=0)
    inside = np.all((preds.min(axis=0) - slack <= combined) & (combined <= preds.max(axis=0) + slack))
    reports = evaluate_all(states, ens.alpha, test)
    ens_mse = reports[-1].rmse ** 2
    worst_mse = max(r.rmse ** 2 for r in reports[:6])
    elapsed = time.perf_counter() - start
    ok = inside and ens_mse <= worst_mse and elapsed < 5
    acceptance("ensemble bounds", ok,
               f"{len(test)} entries within [min, max]: {inside}; ensemble MSE {ens_mse:.4f} "
               f"<= worst base {worst_mse:.4f}; {elapsed:.2f}s")
    assert inside and ens_mse <= worst_mse and elapsed < 5


def test_planted_recovery(acceptance, planted_split):
    train, test = planted_split
    hp = Hyperparams(eta=0.01, lam=0.001, d=8, epochs=200)
    start = time.perf_counter()
    state = _train_single(2, train, hp)
    elapsed = time.perf_counter() - start
    err = _test_rmse(state, test)
    ok = err <= 0.05 and elapsed < 60
    acceptance("planted recovery", ok,
               f"k2 test RMSE {err:.4f} (<= 0.05) after 200 epochs, {elapsed:.1f}s (< 60s)")
    assert err <= 0.05
    assert elapsed < 60


def test_robustness_ordering(acceptance, planted_split):
    train, test = planted_split
    hp = Hyperparams(eta=0.01, lam=0.001, d=8, epochs=200)
    rng = np.random.default_rng(7)
    hit = rng.choice(len(train), size=int(round(0.05 * len(train))), replace=False)
    values = train.values.copy()
    values[hit] += 5.0
    corrupted = type(train)(train.num_rows, train.num_cols, train.rows, train.cols, values)
    start = time.perf_counter()
    degradation = {}
    for kind in (1, 2):
        clean = _test_rmse(_train_single(kind, train, hp), test)
        dirty = _test_rmse(_train_single(kind, corrupted, hp), test)
        degradation[kind] = (clean, dirty, dirty - clean)
    elapsed = time.perf_counter() - start
    ok = degradation[1][2] <= degradation[2][2] and elapsed < 120
    acceptance("robustness ordering", ok,
               "; ".join(f"k{k} {c:.4f} -> {d:.4f} (+{g:.4f})"
                         for k, (c, d, g) in degradation.items()) + f"; {elapsed:.1f}s")
    assert degradation[1][2] <= degradation[2][2]
    assert elapsed < 120


PUBLISHED_DENSITY = [
    ("D1", 138_493, 26_744, 20_000_263, 0.54),
    ("D2", 71_567, 65_133, 10_000_054, 0.21),
    ("D3", 135_359, 168_791, 17_359_346, 0.08),
    ("D4", 72_916, 1_628, 2_811_718, 2.37),
]


def test_density_arithmetic(acceptance):
    parts, ok = [], True
    for name, m, n, h, percent in PUBLISHED_DENSITY:
        got = 100 * density_from_counts(m, n, h)
        good = abs(got - percent) <= 0.005
        ok &= good
        parts.append(f"{name} {got:.4f}% vs {percent}%")
    acceptance("density arithmetic", ok, "; ".join(parts))
    for name, m, n, h, percent in PUBLISHED_DENSITY:
        assert 100 * density_from_counts(m, n, h) == pytest.approx(percent, abs=0.005), name
        assert density_from_counts(m, n, h) == pytest.approx(percent / 100, abs=5e-5), name


def test_train_determinism(acceptance, tmp_path):
    data = planted_instance(3, rows=60, cols=50)
    tr, te = split(data, SplitSpec(0.8, 1))
    for part, name in ((tr, "train.txt"), (te, "test.txt")):
        (tmp_path / name).write_text(
            "".join(f"{m}\t{n}\t{v!r}\n" for m, n, v in part))
    snapshots = []
    for workers in (1, 6):
        out = tmp_path / "run"
        code = cli.main(["train", "--train", str(tmp_path / "train.txt"),
                         "--test", str(tmp_path / "test.txt"), "-o", str(out),
                         "--epochs", "5", "--d", "4", "--seed", "11",
                         "--workers", str(workers)])
        assert code == 0
        snapshots.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
    same = snapshots[0] == snapshots[1]
    acceptance("determinism", same,
               f"{len(snapshots[0])} files byte-identical across reruns: {same}")
    assert same


@pytest.mark.slow
def test_movielens_smoke(acceptance, capsys):
    sys.path.insert(0, str(ROOT / "benchmarks"))
    try:
        from fetch_ml100k import fetch
        path = fetch()
    except Exception as exc:  # noqa: BLE001 - any fetch failure means no data
        acceptance("MovieLens-100K smoke", False, f"dataset unavailable: {exc}")
        pytest.fail(f"MovieLens-100K unavailable: {exc}")
    finally:
        sys.path.pop(0)
    data = parse_ratings(path.read_bytes(), "tab")
    train, test = split(data, SplitSpec(0.8, 0))
    hp = Hyperparams()
    start = time.perf_counter()
    states, ens, history = train_ensemble(train, test, hp)
    elapsed = time.perf_counter() - start
    reports = evaluate_all(states, ens.alpha, test)
    ens_mse = reports[-1].rmse ** 2
    jensen = ens_mse <= max(r.rmse ** 2 for r in reports[:6])
    all_below = all(r.rmse < 1.0 for r in reports)
    ok = all_below and jensen and elapsed < 300 and ens.epoch == 50

    header = "".join(f"{r.predictor:>10}" for r in reports)
    with capsys.disabled():
        print(f"\nMovieLens-100K, 80/20 split, {hp.epochs} epochs, {elapsed:.1f}s")
        print(f"{'':<6}{header}")
        print(f"{'RMSE':<6}" + "".join(f"{r.rmse:>10.4f}" for r in reports))
        print(f"{'MAE':<6}" + "".join(f"{r.mae:>10.4f}" for r in reports))
    assert history.epoch_rows(50)[-1].predictor == ENSEMBLE
    acceptance("MovieLens-100K smoke", ok,
               f"RMSE " + " ".join(f"{r.predictor}={r.rmse:.4f}" for r in reports)
               + f"; all < 1.0: {all_below}; Jensen: {jensen}; {elapsed:.1f}s (< 300s)")
    assert all_below and jensen
    assert elapsed < 300
