import argparse
import itertools
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from . import __version__
from . import config as app_config
from . import experiments
from . import reporting
from . import serialization
from .data import Dataset, Task, load_csv, load_features_csv, split_indices
from .entropy import DEFAULT_SUBSAMPLE_SIZE, EstimatorKind, UmvueVariant
from .errors import ConfigurationError, DataError, EntroForestError
from .forest import (
    DEFAULT_TESTS,
    DEFAULT_TREES,
    Forest,
    TrainConfig,
    count_leaves,
    predict_classes,
    predict_regressions,
    train_forest,
)

logger = logging.getLogger(__name__)

ESTIMATOR_CHOICES = [
    "naive",
    "miller",
    "grassberger",
    "mvn-plugin",
    "mvn-diag",
    "mvn-umvue",
    "one-nn",
]
DEFAULT_ESTIMATOR = {Task.CLASSIFICATION: "grassberger", Task.REGRESSION: "mvn-plugin"}


def _first(*values):
    return next((v for v in values if v is not None), None)


def _add_output_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format",
        choices=["table", "json", "csv"],
        default="table",
        help="Output format when --out is not given (default: table)",
    )
    parser.add_argument(
        "--out",
        type=Path,
        required=False,
        help="Write CSV rows to this path and a JSON summary next to it",
    )


def _add_data_arguments(parser: argparse.ArgumentParser, repeat: bool = False) -> None:
    parser.add_argument(
        "--data",
        type=Path,
        required=True,
        action="append" if repeat else "store",
        help="CSV file with a header row" + (" (repeatable)" if repeat else ""),
    )
    parser.add_argument(
        "--target",
        action="append",
        required=False,
        help="Target column name (repeatable; default: the last column(s))",
    )
    parser.add_argument(
        "--targets-last",
        dest="targets_last",
        type=int,
        default=1,
        help="Number of trailing target columns when --target is not given (default: 1)",
    )


def _add_forest_arguments(parser: argparse.ArgumentParser, grid: bool = False) -> None:
    parser.add_argument(
        "--estimator",
        choices=ESTIMATOR_CHOICES,
        required=False,
        help="Entropy estimator used to score splits",
    )
    parser.add_argument("--trees", type=int, required=False, help=f"Number of trees (default: {DEFAULT_TREES})")
    parser.add_argument(
        "--tests", type=int, required=False, help=f"Random split tests per node (default: {DEFAULT_TESTS})"
    )
    parser.add_argument(
        "--min-split",
        dest="min_split",
        type=int,
        nargs="+" if grid else None,
        required=False,
        help="Minimum node size to keep splitting" + (" (grid)" if grid else " (default: 2)"),
    )
    parser.add_argument(
        "--min-leaf", dest="min_leaf", type=int, required=False, help="Minimum samples per leaf (default: 1)"
    )
    parser.add_argument("--max-depth", dest="max_depth", type=int, required=False, help="Maximum tree depth")
    parser.add_argument(
        "--lambda",
        dest="kde_lambda",
        type=float,
        nargs="+" if grid else None,
        required=False,
        help="KDE covariance regularization" + (" (grid)" if grid else " (default: 0)"),
    )
    _add_estimator_tuning(parser)


def _add_estimator_tuning(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--subsample-size",
        dest="subsample_size",
        type=int,
        required=False,
        help=f"Subsample size of the 1-NN estimator (default: {DEFAULT_SUBSAMPLE_SIZE})",
    )
    parser.add_argument(
        "--umvue-variant",
        dest="umvue_variant",
        choices=[v.value for v in UmvueVariant],
        default=UmvueVariant.CENTERED.value,
        help="Scatter convention of the MVN UMVUE estimator (default: centered)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entroforest",
        description="EntroForest - decision forests with bias-corrected entropy estimators",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"entroforest {__version__}",
        help="Show EntroForest version and exit",
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, required=False, help="Master seed, unsigned 64-bit (default: 0)")
    common.add_argument(
        "--log-level",
        dest="log_level",
        required=False,
        help="Logging level for messages on stderr (default: WARNING)",
    )

    subparsers = parser.add_subparsers(dest="command", required=True)

    # simulate-bias
    bias_p = subparsers.add_parser(
        "simulate-bias",
        parents=[common],
        help="Bias of information gain estimates on a fixed class/branch distribution",
    )
    bias_p.add_argument("--classes", type=int, default=40, help="Number of classes (default: 40)")
    bias_p.add_argument(
        "--sizes",
        type=int,
        nargs="+",
        default=list(experiments.DEFAULT_SAMPLE_SIZES),
        help="Sample sizes to sweep",
    )
    bias_p.add_argument("--replicates", type=int, default=500, help="Replicates per size (default: 500)")
    bias_p.add_argument(
        "--estimator",
        action="append",
        choices=["naive", "miller", "grassberger"],
        required=False,
        help="Estimator to compare (repeatable; default: all three)",
    )
    bias_p.add_argument(
        "--table-seed",
        dest="table_seed",
        type=int,
        default=experiments.DEFAULT_TABLE_SEED,
        help=f"Seed of the random probability table (default: {experiments.DEFAULT_TABLE_SEED})",
    )
    _add_output_arguments(bias_p)

    # train
    train_p = subparsers.add_parser("train", parents=[common], help="Train a forest and save it")
    _add_data_arguments(train_p)
    train_p.add_argument(
        "--task", choices=[t.value for t in Task], default=Task.CLASSIFICATION.value, help="Learning task"
    )
    _add_forest_arguments(train_p)
    train_p.add_argument("--out", type=Path, required=True, help="Path of the model file to write")
    train_p.add_argument(
        "--format", choices=["table", "json", "csv"], default="table", help="Format of the training summary"
    )

    # predict
    predict_p = subparsers.add_parser("predict", parents=[common], help="Predict with a saved forest")
    predict_p.add_argument("--model", type=Path, required=True, help="Model file written by train")
    predict_p.add_argument("--data", type=Path, required=True, help="CSV file of feature rows")
    predict_p.add_argument(
        "--drop", action="append", default=[], help="Column to ignore, e.g. a target column (repeatable)"
    )
    _add_output_arguments(predict_p)

    # evaluate
    eval_p = subparsers.add_parser("evaluate", parents=[common], help="Score a saved forest on labelled data")
    eval_p.add_argument("--model", type=Path, required=True, help="Model file written by train")
    _add_data_arguments(eval_p)
    eval_p.add_argument(
        "--combine",
        choices=["mixture", "mean-log"],
        default="mixture",
        help="How tree densities are averaged (default: mixture)",
    )
    _add_output_arguments(eval_p)

    # model-select
    select_p = subparsers.add_parser(
        "model-select", parents=[common], help="Pick hyperparameters on a validation set"
    )
    _add_data_arguments(select_p)
    select_p.add_argument(
        "--val", type=Path, required=False, help="Validation CSV (default: a random third of --data)"
    )
    select_p.add_argument(
        "--task", choices=[t.value for t in Task], default=Task.CLASSIFICATION.value, help="Learning task"
    )
    _add_forest_arguments(select_p, grid=True)
    select_p.add_argument(
        "--model", type=Path, required=False, help="Also retrain the selected config on train+val and save it"
    )
    _add_output_arguments(select_p)

    # run-classification
    cls_p = subparsers.add_parser(
        "run-classification", parents=[common], help="Classification protocol over one or more datasets"
    )
    _add_data_arguments(cls_p, repeat=True)
    cls_p.add_argument(
        "--estimator",
        action="append",
        choices=["naive", "miller", "grassberger"],
        required=False,
        help="Estimator to compare (repeatable; default: naive and grassberger)",
    )
    cls_p.add_argument("--min-split", dest="min_split", type=int, nargs="+", required=False, help="Grid of minimum node sizes")
    cls_p.add_argument("--replicates", type=int, default=5, help="Replicates per estimator (default: 5)")
    cls_p.add_argument("--trees", type=int, required=False)
    cls_p.add_argument("--tests", type=int, required=False)
    _add_output_arguments(cls_p)

    # run-regression
    reg_p = subparsers.add_parser(
        "run-regression", parents=[common], help="Density regression protocol over one or more datasets"
    )
    _add_data_arguments(reg_p, repeat=True)
    reg_p.add_argument(
        "--estimator",
        action="append",
        choices=["mvn-plugin", "mvn-diag", "mvn-umvue", "one-nn"],
        required=False,
        help="Estimator to compare (repeatable; default: all differential estimators)",
    )
    reg_p.add_argument("--lambda", dest="kde_lambda", type=float, nargs="+", required=False, help="Grid of KDE regularizations")
    reg_p.add_argument(
        "--selection-replicates",
        dest="selection_replicates",
        type=int,
        default=10,
        help="Train/val splits used to select lambda (default: 10)",
    )
    reg_p.add_argument("--replicates", type=int, default=10, help="Final training replicates (default: 10)")
    reg_p.add_argument("--trees", type=int, required=False)
    reg_p.add_argument("--tests", type=int, required=False)
    reg_p.add_argument("--min-leaf", dest="min_leaf", type=int, required=False, help="Minimum samples per leaf (default: 16)")
    reg_p.add_argument(
        "--subsample-size", dest="subsample_size", type=int, required=False, help="1-NN subsample size"
    )
    reg_p.add_argument("--combine", choices=["mixture", "mean-log"], default="mixture")
    _add_output_arguments(reg_p)

    return parser


def _configure_logging(level: str) -> None:
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ConfigurationError(f"unknown log level {level!r}")
    logging.basicConfig(
        level=numeric,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _load(path: Path, args: argparse.Namespace, task: Task) -> Dataset:
    return load_csv(path, args.target or None, task, n_targets=args.targets_last)


def _load_many(args: argparse.Namespace, task: Task) -> Dict[str, Dataset]:
    datasets: Dict[str, Dataset] = {}
    for path in args.data:
        name = path.stem if path.stem not in datasets else str(path)
        datasets[name] = _load(path, args, task)
    return datasets


def _estimator_kind(args: argparse.Namespace, cfg: app_config.EntroForestConfig, task: Task) -> EstimatorKind:
    return EstimatorKind.parse(
        _first(args.estimator, cfg.estimator, DEFAULT_ESTIMATOR[task]),
        subsample_size=_first(args.subsample_size, cfg.subsample_size, DEFAULT_SUBSAMPLE_SIZE),
        umvue_variant=args.umvue_variant,
    )


def _train_config(
    args: argparse.Namespace, cfg: app_config.EntroForestConfig, task: Task, seed: int
) -> TrainConfig:
    return TrainConfig(
        n_trees=_first(args.trees, cfg.trees, DEFAULT_TREES),
        n_tests=_first(args.tests, cfg.tests, DEFAULT_TESTS),
        min_samples_split=_first(args.min_split, cfg.min_split, 2),
        min_samples_leaf=_first(args.min_leaf, cfg.min_leaf, 1),
        max_depth=_first(args.max_depth, cfg.max_depth),
        estimator=_estimator_kind(args, cfg, task),
        kde_lambda=_first(args.kde_lambda, cfg.kde_lambda, 0.0),
        master_seed=seed,
    )


def _check_features(forest: Forest, ds_features: np.ndarray, source: Path) -> None:
    if ds_features.shape[1] != forest.n_features:
        raise DataError(
            f"{source}: model expects {forest.n_features} feature columns, found {ds_features.shape[1]}"
        )


def _align_labels(ds: Dataset, label_names: Sequence[str]) -> Dataset:
    """Re-index class labels to another label order, e.g. a model's."""
    if ds.task is not Task.CLASSIFICATION or not label_names:
        return ds
    index = {name: i for i, name in enumerate(label_names)}
    try:
        targets = [index[ds.label_names[t]] for t in ds.targets]
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]!r} does not occur in the training data") from None
    return replace(
        ds,
        targets=np.asarray(targets, dtype=np.int64),
        n_classes=len(label_names),
        label_names=tuple(label_names),
    )


def _simulate_bias(args: argparse.Namespace, seed: int) -> int:
    sim = experiments.BiasSimConfig(
        n_classes=args.classes,
        sample_sizes=tuple(args.sizes),
        replicates=args.replicates,
        estimators=tuple(args.estimator or ("naive", "miller", "grassberger")),
        seed=seed,
        table_seed=args.table_seed,
    )
    rows = experiments.simulate_bias(sim)
    summary = {
        "kind": "bias",
        "seed": seed,
        "n_classes": sim.n_classes,
        "replicates": sim.replicates,
        "table_seed": sim.table_seed,
    }
    reporting.output_bias_rows(rows, summary, fmt=args.format, out=args.out)
    return 0


def _train(args: argparse.Namespace, cfg: app_config.EntroForestConfig, seed: int) -> int:
    task = Task(args.task)
    ds = _load(args.data, args, task)
    forest = train_forest(ds, _train_config(args, cfg, task, seed))
    serialization.save(forest, args.out)
    logger.info("wrote %s", args.out)
    rows = [{"tree": t, "leaves": count_leaves(tree)} for t, tree in enumerate(forest.trees)]
    summary = {
        "model": str(args.out),
        "task": task.value,
        "n_samples": ds.n_samples,
        "config": forest.config.to_dict(),
        "trees": rows,
    }
    reporting.output_rows("Trained forest", rows, summary, fmt=args.format)
    return 0


def _predict(args: argparse.Namespace, seed: Optional[int] = None) -> int:
    forest = serialization.load(args.model)
    features = load_features_csv(args.data, exclude=args.drop)
    _check_features(forest, features, args.data)
    rows: List[Dict[str, object]] = []
    if forest.task is Task.CLASSIFICATION:
        # tie-breaks follow --seed when given, the training seed otherwise
        rng = None if seed is None else np.random.default_rng(seed)
        for i, label in enumerate(predict_classes(forest, features, rng)):
            name = forest.label_names[label] if forest.label_names else int(label)
            rows.append({"row": i, "label": name})
    else:
        for i, y in enumerate(predict_regressions(forest, features)):
            rows.append({"row": i, **{f"y{j}": float(v) for j, v in enumerate(y)}})
    summary = {"model": str(args.model), "task": forest.task.value, "predictions": rows}
    reporting.output_rows("Predictions", rows, summary, fmt=args.format, out=args.out)
    return 0


def _evaluate(args: argparse.Namespace) -> int:
    forest = serialization.load(args.model)
    ds = _align_labels(_load(args.data, args, forest.task), forest.label_names)
    _check_features(forest, ds.features, args.data)
    if forest.task is Task.CLASSIFICATION:
        metrics = {experiments.Metric.ACCURACY.value: experiments.accuracy(forest, ds)}
    else:
        metrics = {
            experiments.Metric.LOG_LIKELIHOOD.value: experiments.mean_log_likelihood(
                forest, ds, args.combine
            ),
            experiments.Metric.RMSE.value: experiments.rmse(forest, ds),
        }
    rows = [{"metric": name, "value": value} for name, value in metrics.items()]
    summary = {"model": str(args.model), "data": str(args.data), "n_samples": ds.n_samples, "metrics": metrics}
    reporting.output_rows("Evaluation", rows, summary, fmt=args.format, out=args.out)
    return 0


def _model_select(args: argparse.Namespace, cfg: app_config.EntroForestConfig, seed: int) -> int:
    task = Task(args.task)
    ds = _load(args.data, args, task)
    if args.val is not None:
        train, val = ds, _align_labels(_load(args.val, args, task), ds.label_names)
    else:
        rng = np.random.default_rng(experiments.derive_seed(seed, 0))
        train_idx, val_idx = split_indices(ds.n_samples, experiments.REGRESSION_TRAIN_VAL, rng)
        train, val = ds.subset(train_idx), ds.subset(val_idx)

    if task is Task.CLASSIFICATION:
        metric = experiments.Metric.ACCURACY
        splits = args.min_split or list(experiments.DEFAULT_MIN_SPLIT_GRID)
        lambdas = args.kde_lambda or [_first(cfg.kde_lambda, 0.0)]
    else:
        metric = experiments.Metric.LOG_LIKELIHOOD
        splits = args.min_split or [_first(cfg.min_split, 2)]
        lambdas = args.kde_lambda or list(experiments.DEFAULT_LAMBDAS)

    base = _train_config(
        argparse.Namespace(**{**vars(args), "min_split": None, "kde_lambda": None}), cfg, task, seed
    )
    candidates = [
        replace(base, min_samples_split=int(s), kde_lambda=float(lam))
        for s, lam in itertools.product(splits, lambdas)
    ]
    selection = experiments.model_select(candidates, train, val, metric)
    rows = [
        {
            "candidate": c,
            "min_samples_split": candidate.min_samples_split,
            "kde_lambda": candidate.kde_lambda,
            "metric": metric.value,
            "score": float(selection.scores[c]),
            "selected": candidate is selection.config,
        }
        for c, candidate in enumerate(candidates)
    ]
    summary = {"seed": seed, "metric": metric.value, "selected": selection.config.to_dict(), "candidates": rows}
    if args.model is not None:
        if args.val is not None:
            full = Dataset(
                features=np.vstack([train.features, val.features]),
                targets=np.concatenate([train.targets, val.targets]),
                task=task,
                n_classes=train.n_classes,
                label_names=train.label_names,
                feature_names=train.feature_names,
                target_names=train.target_names,
            )
        else:
            full = ds
        serialization.save(train_forest(full, selection.config), args.model)
        summary["model"] = str(args.model)
    reporting.output_rows("Model selection", rows, summary, fmt=args.format, out=args.out)
    return 0


def _run_classification(args: argparse.Namespace, cfg: app_config.EntroForestConfig, seed: int) -> int:
    report = experiments.run_classification(
        _load_many(args, Task.CLASSIFICATION),
        grid=args.min_split or experiments.DEFAULT_MIN_SPLIT_GRID,
        seed=seed,
        estimators=args.estimator or ("naive", "grassberger"),
        replicates=args.replicates,
        n_trees=_first(args.trees, cfg.trees, DEFAULT_TREES),
        n_tests=_first(args.tests, cfg.tests, DEFAULT_TESTS),
    )
    reporting.output_report(report, fmt=args.format, out=args.out)
    return 0


def _run_regression(args: argparse.Namespace, cfg: app_config.EntroForestConfig, seed: int) -> int:
    report = experiments.run_regression(
        _load_many(args, Task.REGRESSION),
        lambdas=args.kde_lambda or experiments.DEFAULT_LAMBDAS,
        seed=seed,
        estimators=args.estimator or ("mvn-diag", "mvn-plugin", "mvn-umvue", "one-nn"),
        selection_replicates=args.selection_replicates,
        final_replicates=args.replicates,
        n_trees=_first(args.trees, cfg.trees, DEFAULT_TREES),
        n_tests=_first(args.tests, cfg.tests, DEFAULT_TESTS),
        min_samples_leaf=_first(args.min_leaf, cfg.min_leaf, 16),
        subsample_size=_first(args.subsample_size, cfg.subsample_size, DEFAULT_SUBSAMPLE_SIZE),
        combine=args.combine,
    )
    reporting.output_report(report, fmt=args.format, out=args.out)
    return 0


def _dispatch(args: argparse.Namespace, cfg: app_config.EntroForestConfig) -> int:
    seed = _first(args.seed, cfg.seed, 0)
    if not 0 <= seed < 2**64:
        raise ConfigurationError(f"--seed must be an unsigned 64-bit integer, got {seed}")

    if args.command == "simulate-bias":
        return _simulate_bias(args, seed)
    if args.command == "train":
        return _train(args, cfg, seed)
    if args.command == "predict":
        return _predict(args, args.seed)
    if args.command == "evaluate":
        return _evaluate(args)
    if args.command == "model-select":
        return _model_select(args, cfg, seed)
    if args.command == "run-classification":
        return _run_classification(args, cfg, seed)
    if args.command == "run-regression":
        return _run_regression(args, cfg, seed)
    return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]

    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        cfg = app_config.load_config()
        _configure_logging(_first(args.log_level, cfg.log_level, "WARNING"))
        return _dispatch(args, cfg)
    except EntroForestError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s", exc)
        return DataError.exit_code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
