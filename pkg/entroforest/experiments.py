"""Bias simulation, model selection and the experiment protocols.

Every random quantity is drawn from a stream derived from the caller's seed
with `numpy.random.SeedSequence`, so a run is reproducible bit for bit.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .data import (
    Dataset,
    Task,
    check_absolute_continuity,
    dequantize,
    split_indices,
)
from .entropy import (
    ClassHistogram,
    EstimatorKind,
    JointClassSplitDistribution,
    estimate_info_gain,
    multinomial_info_gain_exact,
)
from .errors import ConfigurationError, DomainError
from .forest import (
    Forest,
    TrainConfig,
    log_densities,
    predict_classes,
    predict_regressions,
    train_forest,
)

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_SIZES = (50, 100, 200, 400, 800, 1600, 3200)
# Seed of the default class marginal (symmetric Dirichlet(1)) and per-class
# left probabilities (U(0, 1)) of the bias simulation.
DEFAULT_TABLE_SEED = 1
DEFAULT_MIN_SPLIT_GRID = (1, 5, 10)
DEFAULT_LAMBDAS = (1e-4, 1e-3, 1e-2, 0.1, 1.0)
CLASSIFICATION_PROPORTIONS = (0.25, 0.25, 0.5)
REGRESSION_TRAINVAL_TEST = (0.6, 0.4)
# train/val at 40/20 of the whole set, i.e. 2/3 and 1/3 of trainval
REGRESSION_TRAIN_VAL = (2.0 / 3.0, 1.0 / 3.0)


def derive_seed(seed: int, *key: int) -> int:
    """Unsigned 64-bit seed for the stream identified by `key`."""
    state = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(state.generate_state(1, dtype=np.uint64)[0])


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def _std(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


# -- bias simulation -----------------------------------------------------------


@dataclass(frozen=True)
class BiasSimConfig:
    n_classes: int = 40
    class_marginal: Optional[Tuple[float, ...]] = None
    left_probability: Optional[Tuple[float, ...]] = None
    sample_sizes: Tuple[int, ...] = DEFAULT_SAMPLE_SIZES
    replicates: int = 500
    estimators: Tuple[str, ...] = ("naive", "miller", "grassberger")
    seed: int = 0
    table_seed: int = DEFAULT_TABLE_SEED

    def __post_init__(self) -> None:
        if self.n_classes < 1:
            raise ConfigurationError(f"n_classes must be positive, got {self.n_classes}")
        if self.replicates < 1:
            raise ConfigurationError(f"replicates must be positive, got {self.replicates}")
        if not self.sample_sizes or min(self.sample_sizes) < 1:
            raise ConfigurationError("sample sizes must be positive")
        for name in self.estimators:
            if not EstimatorKind.parse(name).is_discrete:
                raise ConfigurationError(f"{name} is not a discrete entropy estimator")

    def joint(self) -> JointClassSplitDistribution:
        rng = np.random.default_rng(self.table_seed)
        pi = (
            rng.dirichlet(np.ones(self.n_classes))
            if self.class_marginal is None
            else np.asarray(self.class_marginal, dtype=float)
        )
        q = (
            rng.uniform(0.0, 1.0, size=self.n_classes)
            if self.left_probability is None
            else np.asarray(self.left_probability, dtype=float)
        )
        if pi.shape != (self.n_classes,) or q.shape != (self.n_classes,):
            raise ConfigurationError(f"class tables must have {self.n_classes} entries")
        try:
            return JointClassSplitDistribution.from_conditionals(pi, q)
        except DomainError as exc:
            raise ConfigurationError(f"invalid probability table: {exc}") from exc


@dataclass(frozen=True)
class BiasRow:
    n: int
    estimator: str
    mean: float
    std: float
    true_gain: float

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def simulate_bias(cfg: BiasSimConfig) -> List[BiasRow]:
    """Mean and spread of estimated information gain against the exact value.

    For each sample size, `cfg.replicates` joint (class, branch) samples are
    drawn once and shared by all estimators.
    """
    joint = cfg.joint()
    truth = multinomial_info_gain_exact(joint)
    k = cfg.n_classes
    kinds = [EstimatorKind.parse(name) for name in cfg.estimators]
    rows: List[BiasRow] = []
    for i, n in enumerate(cfg.sample_sizes):
        rng = _rng(cfg.seed, i)
        cells = rng.multinomial(int(n), joint.table.ravel(), size=cfg.replicates)
        cells = cells.reshape(cfg.replicates, k, 2)
        gains = np.empty((len(kinds), cfg.replicates))
        for r in range(cfg.replicates):
            left = ClassHistogram(cells[r, :, 0], k)
            right = ClassHistogram(cells[r, :, 1], k)
            parent = ClassHistogram(cells[r].sum(axis=1), k)
            for e, kind in enumerate(kinds):
                gains[e, r] = estimate_info_gain(parent, left, right, kind)
        for e, kind in enumerate(kinds):
            rows.append(
                BiasRow(
                    n=int(n),
                    estimator=kind.tag.value,
                    mean=float(gains[e].mean()),
                    std=_std(gains[e]),
                    true_gain=truth,
                )
            )
        logger.debug("bias simulation n=%d done", n)
    return rows


# -- metrics and model selection ---------------------------------------------


class Metric(str, Enum):
    ACCURACY = "accuracy"
    LOG_LIKELIHOOD = "log-likelihood"
    RMSE = "rmse"

    @property
    def higher_is_better(self) -> bool:
        return self is not Metric.RMSE


def accuracy(forest: Forest, ds: Dataset) -> float:
    return float(np.mean(predict_classes(forest, ds.features) == ds.targets))


def mean_log_likelihood(forest: Forest, ds: Dataset, combine: str = "mixture") -> float:
    return float(np.mean(log_densities(forest, ds.features, ds.targets, combine)))


def rmse(forest: Forest, ds: Dataset) -> float:
    """Root of the mean squared error over all samples and output dimensions."""
    errors = predict_regressions(forest, ds.features) - ds.targets
    return float(np.sqrt(np.mean(errors**2)))


def evaluate(forest: Forest, ds: Dataset, metric: Metric) -> float:
    metric = Metric(metric)
    if metric is Metric.ACCURACY:
        return accuracy(forest, ds)
    if metric is Metric.LOG_LIKELIHOOD:
        return mean_log_likelihood(forest, ds)
    return rmse(forest, ds)


class ModelSelection(NamedTuple):
    config: TrainConfig
    scores: np.ndarray


def score_candidates(
    candidates: Sequence[TrainConfig],
    folds: Sequence[Tuple[Dataset, Dataset]],
    metric: Metric,
) -> np.ndarray:
    """Metric of each candidate (rows) trained and evaluated on each fold."""
    scores = np.empty((len(candidates), len(folds)))
    for c, config in enumerate(candidates):
        for f, (train, val) in enumerate(folds):
            scores[c, f] = evaluate(train_forest(train, config), val, metric)
    return scores


def _pick(mean_scores: np.ndarray, metric: Metric) -> int:
    # argmax/argmin return the first optimum, so earlier candidates win ties
    return int(np.argmax(mean_scores) if metric.higher_is_better else np.argmin(mean_scores))


def model_select(
    candidates: Sequence[TrainConfig],
    train: Dataset,
    val: Dataset,
    metric: Metric,
) -> ModelSelection:
    """Candidate with the best validation metric; the first listed wins ties."""
    if not candidates:
        raise ConfigurationError("model selection needs at least one candidate")
    metric = Metric(metric)
    scores = score_candidates(candidates, [(train, val)], metric)[:, 0]
    best = _pick(scores, metric)
    logger.info("selected candidate %d of %d (%s=%.6g)", best, len(candidates), metric.value, scores[best])
    return ModelSelection(candidates[best], scores)


# -- experiment protocols --------------------------------------------------


@dataclass
class ReplicateResult:
    dataset: str
    estimator: str
    replicate: int
    metric: str
    value: float


@dataclass
class ReportRow:
    dataset: str
    estimator: str
    metric: str
    mean: float
    std: float
    replicates: int
    selected: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        row = {k: v for k, v in asdict(self).items() if k != "selected"}
        for key, value in self.selected.items():
            row[f"selected_{key}"] = value
        return row


@dataclass
class ExperimentReport:
    kind: str
    seed: int
    rows: List[ReportRow] = field(default_factory=list)
    replicate_results: List[ReplicateResult] = field(default_factory=list)
    runtime_s: float = 0.0

    def _add(
        self,
        dataset: str,
        estimator: str,
        metric: Metric,
        values: Sequence[float],
        selected: Dict[str, object],
    ) -> None:
        for r, value in enumerate(values):
            self.replicate_results.append(
                ReplicateResult(dataset, estimator, r, metric.value, float(value))
            )
        self.rows.append(
            ReportRow(
                dataset=dataset,
                estimator=estimator,
                metric=metric.value,
                mean=float(np.mean(values)),
                std=_std(values),
                replicates=len(values),
                selected=selected,
            )
        )

    def csv_rows(self) -> List[Dict[str, object]]:
        return [row.to_dict() for row in self.rows]

    def to_dict(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "runtime_s": self.runtime_s,
            "rows": [asdict(row) for row in self.rows],
            "replicates": [asdict(r) for r in self.replicate_results],
        }


def run_classification(
    datasets: Mapping[str, Dataset],
    grid: Sequence[int] = DEFAULT_MIN_SPLIT_GRID,
    seed: int = 0,
    estimators: Sequence[str] = ("naive", "grassberger"),
    replicates: int = 5,
    proportions: Sequence[float] = CLASSIFICATION_PROPORTIONS,
    n_trees: int = 8,
    n_tests: int = 256,
) -> ExperimentReport:
    """Select min_samples_split on val, retrain on train+val, score on test.

    The split is drawn once per dataset; replicates differ only in the
    forest's master seed, which is shared across estimators.
    """
    start = time.perf_counter()
    report = ExperimentReport(kind="classification", seed=int(seed))
    for d, (name, ds) in enumerate(datasets.items()):
        if ds.task is not Task.CLASSIFICATION:
            raise ConfigurationError(f"{name} is not a classification dataset")
        train_idx, val_idx, test_idx = split_indices(ds.n_samples, proportions, _rng(seed, d, 0))
        train, val, test = ds.subset(train_idx), ds.subset(val_idx), ds.subset(test_idx)
        trainval = ds.subset(np.concatenate([train_idx, val_idx]))
        for estimator in estimators:
            kind = EstimatorKind.parse(estimator)
            accuracies = []
            chosen = []
            for r in range(replicates):
                master_seed = derive_seed(seed, d, 1, r)
                candidates = [
                    TrainConfig(
                        n_trees=n_trees,
                        n_tests=n_tests,
                        min_samples_split=int(g),
                        estimator=kind,
                        master_seed=master_seed,
                    )
                    for g in grid
                ]
                selection = model_select(candidates, train, val, Metric.ACCURACY)
                forest = train_forest(trainval, selection.config)
                accuracies.append(accuracy(forest, test))
                chosen.append(selection.config.min_samples_split)
            logger.info("%s/%s accuracy %.4f", name, kind.tag.value, float(np.mean(accuracies)))
            report._add(
                name,
                kind.tag.value,
                Metric.ACCURACY,
                accuracies,
                {"min_samples_split": " ".join(str(c) for c in chosen)},
            )
    report.runtime_s = time.perf_counter() - start
    return report


def run_regression(
    datasets: Mapping[str, Dataset],
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    seed: int = 0,
    estimators: Sequence[str] = ("mvn-diag", "mvn-plugin", "mvn-umvue", "one-nn"),
    selection_replicates: int = 10,
    final_replicates: int = 10,
    n_trees: int = 8,
    n_tests: int = 256,
    min_samples_leaf: int = 16,
    subsample_size: int = 256,
    combine: str = "mixture",
) -> ExperimentReport:
    """Dequantize, hold out 40%, select lambda over repeated 40/20 splits.

    Reports holdout mean log-likelihood and RMSE of the final forests, each
    trained on the full 60% train+val part.
    """
    start = time.perf_counter()
    report = ExperimentReport(kind="regression", seed=int(seed))
    for d, (name, ds) in enumerate(datasets.items()):
        if ds.task is not Task.REGRESSION:
            raise ConfigurationError(f"{name} is not a regression dataset")
        rng = _rng(seed, d, 0)
        check_absolute_continuity(ds.targets)
        ds = ds.with_targets(dequantize(ds.targets, rng))
        trainval_idx, test_idx = split_indices(ds.n_samples, REGRESSION_TRAINVAL_TEST, rng)
        trainval, test = ds.subset(trainval_idx), ds.subset(test_idx)
        folds = []
        for _ in range(selection_replicates):
            tr, va = split_indices(trainval.n_samples, REGRESSION_TRAIN_VAL, rng)
            folds.append((trainval.subset(tr), trainval.subset(va)))
        for estimator in estimators:
            kind = EstimatorKind.parse(estimator, subsample_size=subsample_size)
            candidates = [
                TrainConfig(
                    n_trees=n_trees,
                    n_tests=n_tests,
                    min_samples_leaf=min_samples_leaf,
                    estimator=kind,
                    kde_lambda=float(lam),
                    master_seed=derive_seed(seed, d, 2),
                )
                for lam in lambdas
            ]
            scores = score_candidates(candidates, folds, Metric.LOG_LIKELIHOOD)
            best = candidates[_pick(scores.mean(axis=1), Metric.LOG_LIKELIHOOD)]
            lls, errors = [], []
            for r in range(final_replicates):
                forest = train_forest(trainval, replace(best, master_seed=derive_seed(seed, d, 1, r)))
                lls.append(mean_log_likelihood(forest, test, combine))
                errors.append(rmse(forest, test))
            selected = {"lambda": best.kde_lambda}
            logger.info("%s/%s lambda=%g ll=%.4f", name, kind.tag.value, best.kde_lambda, float(np.mean(lls)))
            report._add(name, kind.tag.value, Metric.LOG_LIKELIHOOD, lls, selected)
            report._add(name, kind.tag.value, Metric.RMSE, errors, selected)
    report.runtime_s = time.perf_counter() - start
    return report
