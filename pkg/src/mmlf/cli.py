"""``mmlf`` command line: split, train, evaluate, predict, weights.

Exit codes: 0 success, 1 usage/config error, 2 I/O or parse error,
3 training divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .config import ConfigError, RunConfig, format_config, load_config
from .data import (
    DELIMITERS,
    RatingFormatError,
    RatingMatrix,
    SplitSpec,
    density,
    _split_line,
    parse_ratings,
    read_id_map,
    split,
    write_id_map,
    write_ratings,
)
from .ensemble import load_model_dir, save_model_dir, train_ensemble
from .metrics import (
    CSV_HEADER,
    ENSEMBLE,
    combine,
    evaluate_all,
    format_metrics_row,
    parse_metrics_csv,
)
from .model import ALL_KINDS, CheckpointError, DivergenceError, FactorState

log = logging.getLogger("mmlf")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED = 0, 1, 2, 3

TRAIN_FILE, TEST_FILE = "train.txt", "test.txt"
ROW_MAP, COL_MAP = "row_ids.tsv", "col_ids.tsv"
CONFIG_FILE, METRICS_FILE = "config.txt", "metrics.csv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_bytes(path) -> bytes:
    return Path(path).read_bytes()


# -- split ----------------------------------------------------------------


def cmd_split(args) -> int:
    cfg = _resolve_config(args)
    try:
        spec = SplitSpec(cfg.train_fraction, cfg.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    matrix = parse_ratings(_read_bytes(args.input), cfg.format, id_remap=True)
    try:
        train, test = split(matrix, spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_ratings(train, out / TRAIN_FILE, cfg.format)
    write_ratings(test, out / TEST_FILE, cfg.format)
    write_id_map(matrix.row_ids, out / ROW_MAP)
    write_id_map(matrix.col_ids, out / COL_MAP)
    print(f"rows={matrix.num_rows} cols={matrix.num_cols} entries={len(matrix)} "
          f"density={density(matrix):.6g}")
    print(f"train={len(train)} test={len(test)} -> {out}")
    return EXIT_OK


# -- train ----------------------------------------------------------------


def _load_maps(args, train_path: Path):
    row_path = Path(args.row_ids) if getattr(args, "row_ids", None) else train_path.parent / ROW_MAP
    col_path = Path(args.col_ids) if getattr(args, "col_ids", None) else train_path.parent / COL_MAP
    if row_path.exists() and col_path.exists():
        return read_id_map(row_path), read_id_map(col_path)
    return None, None


def load_train_test(cfg: RunConfig, args=None) -> tuple[RatingMatrix, RatingMatrix]:
    """Parse train and test into one shared dense index space."""
    train_path = Path(cfg.train)
    row_ids, col_ids = _load_maps(args, train_path)
    train = parse_ratings(_read_bytes(train_path), cfg.format, row_ids=row_ids, col_ids=col_ids)
    test = parse_ratings(_read_bytes(cfg.test), cfg.format,
                         row_ids=train.row_ids, col_ids=train.col_ids)
    # test may append unseen ids; the train indices are a prefix and stay valid
    train = RatingMatrix(test.num_rows, test.num_cols, train.rows, train.cols, train.values,
                         test.row_ids, test.col_ids)
    return train, test


def _resolve_config(args) -> RunConfig:
    base = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        name: getattr(args, name, None)
        for name in ("train", "test", "format", "train_fraction", "seed", "eta", "lam", "d",
                     "zeta", "epochs", "init_scale", "dist_eps", "clamp_min", "clamp_max", "out")
    }
    if getattr(args, "clamp", None):
        overrides["clamp"] = True
    return base.merged(**overrides)


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    if not cfg.train or not cfg.test or not cfg.out:
        raise UsageError("train needs --train, --test and --out (flags or config keys)")
    cfg.validate()
    train, test = load_train_test(cfg, args)
    hp = cfg.hyperparams()
    cfg = cfg.merged(zeta=hp.resolve_zeta(len(train)))
    if cfg.clamp:
        cfg = cfg.merged(
            clamp_min=cfg.clamp_min if cfg.clamp_min is not None else float(train.values.min()),
            clamp_max=cfg.clamp_max if cfg.clamp_max is not None else float(train.values.max()),
        )
    hp = cfg.hyperparams()

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(format_config(cfg), encoding="utf-8")
    write_id_map(train.row_ids, out / ROW_MAP)
    write_id_map(train.col_ids, out / COL_MAP)
    log.info("training on %d entries (%dx%d), backend=%s", len(train), train.num_rows,
             train.num_cols, _backend.NAME)

    with open(out / METRICS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")

        def stream(t, rows):
            for r in rows:
                fh.write(format_metrics_row(r) + "\n")
            fh.flush()
            ens = rows[-1]
            log.info("epoch %d: ensemble rmse=%.4f mae=%.4f", t, ens.test_rmse, ens.test_mae)

        states, ens, _ = train_ensemble(train, test, hp, workers=args.workers,
                                        on_epoch=stream, clamp=cfg.clamp_range())
    save_model_dir(out, states, ens)
    print(f"trained {cfg.epochs} epochs -> {out}")
    return EXIT_OK


# -- evaluate / predict ---------------------------------------------------


def _pad(states: list[FactorState], num_rows: int, num_cols: int) -> list[FactorState]:
    """Extend states with zero factors and biases for ids the model never saw."""
    out = []
    for s in states:
        extra_r = num_rows - s.num_rows
        extra_c = num_cols - s.num_cols
        if extra_r == 0 and extra_c == 0:
            out.append(s)
            continue
        out.append(FactorState(
            np.vstack([s.P, np.zeros((extra_r, s.d))]),
            np.vstack([s.Q, np.zeros((extra_c, s.d))]),
            np.concatenate([s.b_row, np.zeros(extra_r)]),
            np.concatenate([s.b_col, np.zeros(extra_c)]),
            s.kind,
        ))
    return out


def _load_model(model_dir: Path):
    states, ens = load_model_dir(model_dir)
    try:
        row_ids = read_id_map(model_dir / ROW_MAP)
        col_ids = read_id_map(model_dir / COL_MAP)
    except FileNotFoundError as exc:
        raise CheckpointError(f"missing id map: {exc.filename}") from None
    if len(row_ids) != states[0].num_rows or len(col_ids) != states[0].num_cols:
        raise CheckpointError("id maps do not match the checkpoint dimensions")
    cfg_path = model_dir / CONFIG_FILE
    cfg = load_config(cfg_path) if cfg_path.exists() else RunConfig()
    return states, ens, row_ids, col_ids, cfg


def cmd_evaluate(args) -> int:
    model_dir = Path(args.model)
    states, ens, row_ids, col_ids, cfg = _load_model(model_dir)
    test_path = args.test or cfg.test
    if not test_path:
        raise UsageError("no test file given and none recorded in the model config")
    fmt = args.format or cfg.format
    test = parse_ratings(_read_bytes(test_path), fmt, row_ids=row_ids, col_ids=col_ids)
    states = _pad(states, test.num_rows, test.num_cols)
    reports = evaluate_all(states, ens.alpha, test, clamp=cfg.clamp_range())

    print(f"{'predictor':<10} {'rmse':>12} {'mae':>12} {'count':>8}")
    for r in reports:
        print(f"{r.predictor:<10} {r.rmse:>12.6f} {r.mae:>12.6f} {r.count:>8d}")
    csv_path = Path(args.csv) if args.csv else model_dir / "evaluation.csv"
    lines = ["predictor,rmse,mae,count"]
    lines += [f"{r.predictor},{r.rmse:.10g},{r.mae:.10g},{r.count}" for r in reports]
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def _read_pairs(path, fmt: str) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = _split_line(line, DELIMITERS[fmt])
            if fmt == "tab" and len(parts) < 2:
                parts = line.split()
            if len(parts) < 2 or not parts[0] or not parts[1]:
                raise RatingFormatError("expected user and item", lineno)
            pairs.append((parts[0], parts[1]))
    return pairs


def cmd_predict(args) -> int:
    states, ens, row_ids, col_ids, cfg = _load_model(Path(args.model))
    pairs = _read_pairs(args.pairs, args.format or cfg.format)
    row_index = {r: i for i, r in enumerate(row_ids)}
    col_index = {c: i for i, c in enumerate(col_ids)}
    # unknown ids point at an appended zero row/column
    unk_r, unk_c = len(row_ids), len(col_ids)
    rows = np.array([row_index.get(u, unk_r) for u, _ in pairs], dtype=np.int64)
    cols = np.array([col_index.get(i, unk_c) for _, i in pairs], dtype=np.int64)
    lines = []
    if pairs:
        padded = _pad(states, unk_r + 1, unk_c + 1)
        preds = np.vstack([s.predict_many(rows, cols) for s in padded])
        clamp = cfg.clamp_range()
        if clamp is not None:
            preds = np.clip(preds, *clamp)
        combined = combine(ens.alpha, preds)
        for j, (u, i) in enumerate(pairs):
            flag = "fallback" if rows[j] == unk_r or cols[j] == unk_c else "ok"
            values = [combined[j], *preds[:, j]]
            lines.append("\t".join([u, i, *(f"{v:.17g}" for v in values), flag]))
    text = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_weights(args) -> int:
    path = Path(args.model) / METRICS_FILE
    rows = parse_metrics_csv(path.read_text(encoding="utf-8"))
    labels = [k.label for k in ALL_KINDS]
    print("epoch " + " ".join(f"{lab:>10}" for lab in labels) + f" {'ens_rmse':>10}")
    by_epoch: dict[int, dict[str, float]] = {}
    for r in rows:
        by_epoch.setdefault(r.epoch, {})[r.predictor] = (
            r.test_rmse if r.predictor == ENSEMBLE else r.alpha
        )
    for t in sorted(by_epoch):
        vals = by_epoch[t]
        print(f"{t:>5} " + " ".join(f"{vals[lab]:>10.6f}" for lab in labels)
              + f" {vals[ENSEMBLE]:>10.6f}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------


def _add_hparams(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--format", choices=["tab", "comma", "double-colon"], default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmlf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("split", parents=[common], help="random per-entry train/test split")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True)
    _add_hparams(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train the six base models and the ensemble")
    _add_hparams(p)
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--row-ids", dest="row_ids")
    p.add_argument("--col-ids", dest="col_ids")
    p.add_argument("-o", "--out")
    p.add_argument("--eta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--d", "--dim", dest="d", type=int)
    p.add_argument("--zeta", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--init-scale", dest="init_scale", type=float)
    p.add_argument("--dist-eps", dest="dist_eps", type=float)
    p.add_argument("--clamp", action="store_true", default=None)
    p.add_argument("--clamp-min", dest="clamp_min", type=float)
    p.add_argument("--clamp-max", dest="clamp_max", type=float)
    p.add_argument("--workers", type=int, default=None,
                   help="threads for the six trainers (results do not depend on it)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="RMSE/MAE of the six models and the ensemble")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--test")
    p.add_argument("--format", choices=["tab", "comma", "double-colon"])
    p.add_argument("--csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="predict ratings for user/item pairs")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--format", choices=["tab", "comma", "double-colon"])
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("weights", parents=[common], help="per-epoch ensemble weight trajectory")
    p.add_argument("-m", "--model", required=True)
    p.set_defaults(func=cmd_weights)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"mmlf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        which = exc.kind.label if exc.kind is not None else "?"
        print(f"mmlf: divergence in base model {which}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, RatingFormatError, CheckpointError, ValueError) as exc:
        print(f"mmlf: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
