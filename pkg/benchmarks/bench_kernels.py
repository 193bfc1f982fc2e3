"""Time one SGD epoch per base model with the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--entries 20000] [--d 20] [--repeat 3]
"""
import argparse
import time

import numpy as np

from mmlf import _kernels_py
from mmlf.model import ALL_KINDS, Hyperparams, init_state
from mmlf.sgd import epoch_order

try:
    from mmlf import _kernels
except ImportError:
    _kernels = None


def make_problem(entries, rows, cols, seed=0):
    rng = np.random.default_rng(seed)
    cells = rng.choice(rows * cols, size=entries, replace=False)
    return ((cells // cols).astype(np.int64), (cells % cols).astype(np.int64),
            rng.integers(1, 6, size=entries).astype(np.float64))


def time_epoch(backend, kind, hp, rows, cols, data, repeat):
    r, c, v = data
    best = float("inf")
    for t in range(1, repeat + 1):
        s = init_state(rows, cols, kind, hp)
        order = epoch_order(len(v), hp.seed, kind, t)
        start = time.perf_counter()
        backend.run_epoch(int(kind), s.P, s.Q, s.b_row, s.b_col, r, c, v, order,
                          hp.eta, hp.lam, hp.dist_eps)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--entries", type=int, default=20_000)
    ap.add_argument("--rows", type=int, default=943)
    ap.add_argument("--cols", type=int, default=1682)
    ap.add_argument("--d", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    hp = Hyperparams(d=args.d)
    data = make_problem(args.entries, args.rows, args.cols)
    backends = [b for b in (_kernels, _kernels_py) if b is not None]
    print(f"{args.entries} entries, d={args.d}, best of {args.repeat}")
    print(f"{'model':<6}" + "".join(f"{b.NAME + ' (s)':>14}" for b in backends)
          + (f"{'speedup':>10}" if len(backends) == 2 else ""))
    for kind in ALL_KINDS:
        times = [time_epoch(b, kind, hp, args.rows, args.cols, data, args.repeat)
                 for b in backends]
        line = f"{kind.label:<6}" + "".join(f"{t:>14.4f}" for t in times)
        if len(times) == 2:
            line += f"{times[1] / times[0]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
