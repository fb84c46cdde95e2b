"""``train`` and ``predict`` command-line programs.

Exit codes: 0 success, 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import DataError, ShapeMismatch
from .losses import RegrLabels, TaskWeights, check_class_labels
from .model_io import ModelConfig, load_model, read_float_list, save_model, write_predictions
from .nn import ACTIVATIONS, NetworkArchitecture
from .optim import OptimizerConfig
from .pipeline import BatchPlan, read_folds, split_by_fold
from .sparse import read_matrix
from .training import Dataset, evaluate_dataset, fit, predict

log = logging.getLogger("sparsetask")

EXIT_USAGE = 2
EXIT_DATA = 3


def _hidden(s: str) -> List[int]:
    try:
        sizes = [int(t) for t in s.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected INT[,INT...], got {s!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("hidden sizes must be positive")
    return sizes


def _flag01(s: str) -> bool:
    if s not in ("0", "1"):
        raise argparse.ArgumentTypeError(f"expected 0 or 1, got {s!r}")
    return s == "1"


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def build_train_parser(prog: str = "sparsetask train") -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=prog, allow_abbrev=False,
                                description="Train a multi-task network on sparse features.")
    p.add_argument("--x", required=True, help="feature matrix (Matrix Market or .scsr)")
    p.add_argument("--y-class", help="classification labels, +1/-1 at observed entries")
    p.add_argument("--y-regr", help="regression targets")
    p.add_argument("--y-censor", help="censor mask for --y-regr: +1 upper, -1 lower")
    p.add_argument("--folding", help="fold vector file, one integer per row")
    p.add_argument("--fold-va", type=int, default=0, help="validation fold id (default 0)")
    p.add_argument("--hidden", type=_hidden, default=[1000], help="hidden sizes, e.g. 2000 or 500,100")
    p.add_argument("--dropout-trunk", type=float, default=0.0)
    p.add_argument("--activation", choices=ACTIVATIONS, default="relu")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=_positive_int, default=200)
    p.add_argument("--internal-batch-max", type=_positive_int, default=None,
                   help="rows per forward/backward chunk (default: batch size)")
    p.add_argument("--task-weights-class", help="one weight per line")
    p.add_argument("--task-weights-regr", help="one weight per line")
    p.add_argument("--standardize-regression", "--normalize-regression", dest="standardize_regression",
                   type=_flag01, default=False, metavar="{0,1}")
    p.add_argument("--min-samples-auc", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out-prefix", default="model")
    p.add_argument("--plots", type=_flag01, default=True, metavar="{0,1}",
                   help="render loss and per-task metric figures (default 1)")
    p.add_argument("--verbose", action="store_true")
    return p


def build_predict_parser(prog: str = "sparsetask predict") -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=prog, allow_abbrev=False, description="Predict with a trained model.")
    p.add_argument("--x", required=True)
    p.add_argument("--conf", required=True, help="model config written by train (<prefix>.conf)")
    p.add_argument("--model", required=True, help="weights file written by train (<prefix>.weights)")
    p.add_argument("--outprefix", required=True)
    return p


def _load(path: str, what: str):
    try:
        return read_matrix(path)
    except OSError as exc:
        raise DataError(f"{path}: cannot read {what}: {exc.strerror}") from None
    except DataError as exc:
        msg = str(exc)
        raise type(exc)(msg if msg.startswith(str(path)) else f"{path}: {msg}") from None


def _prefixed(path, fn, *args):
    try:
        return fn(*args)
    except DataError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def _weights(path: Optional[str], n: int, what: str) -> np.ndarray:
    if path is None:
        return np.ones(n)
    try:
        w = read_float_list(path)
    except OSError as exc:
        raise DataError(f"{path}: cannot read {what}: {exc.strerror}") from None
    if len(w) != n:
        raise ShapeMismatch(f"{path}: {len(w)} {what} for {n} tasks")
    return w


def run_train(args) -> int:
    x = _load(args.x, "features")
    y_class = y_regr = None
    if args.y_class:
        y_class = _load(args.y_class, "classification labels")
        _prefixed(args.y_class, check_class_labels, y_class)
        if y_class.n_rows != x.n_rows:
            raise ShapeMismatch(f"{args.y_class}: {y_class.n_rows} rows, but {args.x} has {x.n_rows} rows")
    if args.y_regr:
        targets = _load(args.y_regr, "regression targets")
        if targets.n_rows != x.n_rows:
            raise ShapeMismatch(f"{args.y_regr}: {targets.n_rows} rows, but {args.x} has {x.n_rows} rows")
        censor = None
        if args.y_censor:
            censor = _load(args.y_censor, "censor mask")
        y_regr = _prefixed(args.y_censor or args.y_regr, RegrLabels, targets, censor)
    data = Dataset(x, y_class, y_regr)

    if args.folding:
        try:
            folds = read_folds(args.folding)
        except OSError as exc:
            raise DataError(f"{args.folding}: cannot read fold vector: {exc.strerror}") from None
        if len(folds) != x.n_rows:
            raise ShapeMismatch(f"{args.folding}: {len(folds)} folds, but {args.x} has {x.n_rows} rows")
        train_rows, valid_rows = _prefixed(args.folding, split_by_fold, folds, args.fold_va)
    else:
        train_rows, valid_rows = np.arange(x.n_rows), None

    arch = NetworkArchitecture(x.n_cols, args.hidden, data.n_class_tasks, data.n_regr_tasks,
                               args.dropout_trunk, args.activation)
    weights = TaskWeights(_weights(args.task_weights_class, data.n_class_tasks, "class task weights"),
                          _weights(args.task_weights_regr, data.n_regr_tasks, "regression task weights"))
    opt = OptimizerConfig(args.optimizer, args.lr, args.weight_decay)
    plan = BatchPlan(args.batch_size, min(args.internal_batch_max or args.batch_size, args.batch_size), args.seed)

    result = fit(data, arch, train_rows=train_rows, valid_rows=valid_rows, epochs=args.epochs, plan=plan,
                 optimizer=opt, weights=weights, standardize_regression=args.standardize_regression,
                 min_samples=args.min_samples_auc, seed=args.seed)
    cfg = ModelConfig(arch, opt, plan, weights, result.stats, seed=args.seed, epochs=args.epochs)

    prefix = args.out_prefix
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    save_model(cfg, result.params, f"{prefix}.conf", f"{prefix}.weights")

    from . import report

    reports = {"train": evaluate_dataset(result.params, data.take_rows(train_rows), result.stats,
                                         args.min_samples_auc)}
    if valid_rows is not None:
        reports["valid"] = evaluate_dataset(result.params, data.take_rows(valid_rows), result.stats,
                                            args.min_samples_auc)
    names = {"class": cfg.class_task_names, "regr": cfg.regr_task_names}
    extra = {"final_train_loss": result.history[-1].train_loss} if result.history else {}
    report.write_metrics(f"{prefix}-metrics.txt", reports, names, extra)
    report.write_history(f"{prefix}-history.tsv", result.history)
    if args.plots and result.history:
        report.plot_history(result.history, f"{prefix}-loss.png")
        split = "valid" if "valid" in reports else "train"
        report.plot_task_metrics(reports[split], f"{prefix}-tasks.png", title=f"{split} metrics")
    for split, rep in reports.items():
        for key, v in rep.aggregates().items():
            log.info("%s %s = %s", split, key, v)
    return 0


def run_predict(args) -> int:
    try:
        cfg, params = load_model(args.conf, args.model)
    except OSError as exc:
        raise DataError(f"{exc.filename}: cannot read model: {exc.strerror}") from None
    x = _load(args.x, "features")
    if x.n_cols != cfg.n_features:
        raise ShapeMismatch(f"{args.x}: {x.n_cols} feature columns, model expects {cfg.n_features}")
    probs, regr = predict(params, x, cfg.stats)
    Path(args.outprefix).parent.mkdir(parents=True, exist_ok=True)
    for p in write_predictions(args.outprefix, probs, regr, cfg):
        log.info("wrote %s", p)
    return 0


def _run(parser: argparse.ArgumentParser, runner, argv) -> int:
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "y_censor", None) and not args.y_regr:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: --y-censor requires --y-regr", file=sys.stderr)
        return EXIT_USAGE
    if runner is run_train and not (args.y_class or args.y_regr):
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: at least one of --y-class/--y-regr is required", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s")
    try:
        return runner(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # invalid hyper-parameters that argparse cannot check on its own
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main_train(argv=None) -> int:
    return _run(build_train_parser(), run_train, argv)


def main_predict(argv=None) -> int:
    return _run(build_predict_parser(), run_predict, argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    commands = {"train": main_train, "predict": main_predict}
    if argv[:1] in (["-h"], ["--help"]):
        print("usage: sparsetask {train,predict} [options]")
        return 0
    if not argv or argv[0] not in commands:
        print("usage: sparsetask {train,predict} [options]", file=sys.stderr)
        return EXIT_USAGE
    return commands[argv[0]](argv[1:])
