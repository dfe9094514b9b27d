"""Greedy randomized tree induction and forest prediction.

Each node draws `n_tests` single-feature threshold tests, scores every test by
the negated sample-weighted entropy of its two children under the configured
estimator, and keeps the first test with the strictly highest score. Trees
see the full training set; all randomness is in the proposals and leaf
tie-breaks, driven by a per-tree stream derived from the master seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .data import Dataset, Standardizer, Task, fit_standardizer
from .entropy import ClassHistogram, Estimator, EstimatorKind, Side, split_score
from .errors import ConfigurationError, DomainError, EmptySampleError
from .leaves import ClassLeaf, KdeLeaf, LeafPayload, fit_kde_leaf, kde_log_density, majority_label

logger = logging.getLogger(__name__)

DEFAULT_TREES = 8
DEFAULT_TESTS = 256


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = DEFAULT_TREES
    n_tests: int = DEFAULT_TESTS
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_depth: Optional[int] = None
    estimator: EstimatorKind = field(default_factory=lambda: EstimatorKind(Estimator.NAIVE))
    kde_lambda: float = 0.0
    master_seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.estimator, str):
            object.__setattr__(self, "estimator", EstimatorKind.parse(self.estimator))
        if self.n_trees < 1:
            raise ConfigurationError(f"n_trees must be positive, got {self.n_trees}")
        if self.n_tests < 1:
            raise ConfigurationError(f"n_tests must be positive, got {self.n_tests}")
        if self.min_samples_split < 1:
            raise ConfigurationError(
                f"min_samples_split must be positive, got {self.min_samples_split}"
            )
        if self.min_samples_leaf < 1:
            raise ConfigurationError(
                f"min_samples_leaf must be positive, got {self.min_samples_leaf}"
            )
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigurationError(f"max_depth must be positive, got {self.max_depth}")
        if self.kde_lambda < 0:
            raise ConfigurationError(f"kde_lambda must be non-negative, got {self.kde_lambda}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigurationError("master_seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        return {
            "n_trees": int(self.n_trees),
            "n_tests": int(self.n_tests),
            "min_samples_split": int(self.min_samples_split),
            "min_samples_leaf": int(self.min_samples_leaf),
            "max_depth": None if self.max_depth is None else int(self.max_depth),
            "estimator": self.estimator.to_dict(),
            "kde_lambda": float(self.kde_lambda),
            "master_seed": int(self.master_seed),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(
            n_trees=int(data["n_trees"]),
            n_tests=int(data["n_tests"]),
            min_samples_split=int(data["min_samples_split"]),
            min_samples_leaf=int(data["min_samples_leaf"]),
            max_depth=None if data.get("max_depth") is None else int(data["max_depth"]),
            estimator=EstimatorKind.from_dict(data["estimator"]),
            kde_lambda=float(data["kde_lambda"]),
            master_seed=int(data["master_seed"]),
        )


@dataclass(frozen=True)
class SplitCandidate:
    """The test x[feature] <= threshold; true sends a sample left."""

    feature: int
    threshold: float


@dataclass(frozen=True, eq=False)
class InternalNode:
    split: SplitCandidate
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[InternalNode, ClassLeaf, KdeLeaf]


@dataclass(frozen=True, eq=False)
class Forest:
    trees: Tuple[TreeNode, ...]
    task: Task
    n_outputs: int
    n_features: int
    config: TrainConfig
    standardizer: Optional[Standardizer] = None
    label_names: Tuple[str, ...] = ()


def tree_seed(master_seed: int, tree_index: int) -> np.random.SeedSequence:
    """Independent stream for tree `tree_index`, a pure function of both."""
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(tree_index),))


def _check_modality(task: Task, kind: EstimatorKind) -> None:
    if task is Task.CLASSIFICATION and not kind.is_discrete:
        raise ConfigurationError(f"{kind.tag.value} cannot score classification splits")
    if task is Task.REGRESSION and kind.is_discrete:
        raise ConfigurationError(f"{kind.tag.value} cannot score regression splits")


# -- induction ---------------------------------------------------------------


def propose_split(node_features: np.ndarray, rng: np.random.Generator) -> SplitCandidate:
    """Uniform feature, threshold taken from a uniformly chosen node sample."""
    m, p = node_features.shape
    if m == 0:
        raise EmptySampleError("cannot propose a split for an empty node")
    feature = int(rng.integers(p))
    row = int(rng.integers(m))
    return SplitCandidate(feature, float(node_features[row, feature]))


def partition(
    features: np.ndarray, indices: np.ndarray, split: SplitCandidate
) -> Tuple[np.ndarray, np.ndarray]:
    goes_left = features[indices, split.feature] <= split.threshold
    return indices[goes_left], indices[~goes_left]


def _side(dataset: Dataset, indices: np.ndarray) -> Side:
    if dataset.task is Task.CLASSIFICATION:
        counts = np.bincount(dataset.targets[indices], minlength=dataset.n_classes)
        return ClassHistogram(counts, dataset.n_classes)
    return dataset.targets[indices]


def select_best_split(
    dataset: Dataset,
    indices: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
) -> Optional[Tuple[SplitCandidate, float]]:
    """Best of `config.n_tests` random tests, or None if all are degenerate.

    Tests leaving a side smaller than `min_samples_leaf` (or than the
    estimator can handle) score -inf. Ties keep the earlier test.
    """
    indices = np.asarray(indices, dtype=np.int64)
    node_features = dataset.features[indices]
    side_minimum = max(
        config.min_samples_leaf, config.estimator.min_samples(dataset.n_outputs)
    )
    ranking = _ranking_kind(config.estimator)
    best: Optional[SplitCandidate] = None
    best_left: Optional[np.ndarray] = None
    best_score = -np.inf
    for _ in range(config.n_tests):
        split = propose_split(node_features, rng)
        goes_left = node_features[:, split.feature] <= split.threshold
        n_left = int(goes_left.sum())
        if min(n_left, indices.size - n_left) < side_minimum:
            continue
        score = split_score(
            _side(dataset, indices[goes_left]),
            _side(dataset, indices[~goes_left]),
            ranking,
            rng,
        )
        if score > best_score:
            best, best_left, best_score = split, goes_left, float(score)
    if best is None:
        return None
    if ranking is not config.estimator:
        best_score = float(
            split_score(
                _side(dataset, indices[best_left]),
                _side(dataset, indices[~best_left]),
                config.estimator,
            )
        )
    return best, best_score


def _ranking_kind(kind: EstimatorKind) -> EstimatorKind:
    # Miller scores are naive scores minus (K - 1) / n, constant over a
    # node's candidates; ranking on the naive sum keeps the order exact.
    if kind.tag is Estimator.MILLER:
        return EstimatorKind(Estimator.NAIVE)
    return kind


class _TreeGrower:
    def __init__(self, dataset: Dataset, config: TrainConfig, rng: np.random.Generator) -> None:
        self.dataset = dataset
        self.config = config
        self.rng = rng

    def _is_pure(self, indices: np.ndarray) -> bool:
        if self.dataset.task is not Task.CLASSIFICATION:
            return False
        labels = self.dataset.targets[indices]
        return bool(np.all(labels == labels[0]))

    def _should_stop(self, indices: np.ndarray, depth: int) -> bool:
        if indices.size < self.config.min_samples_split:
            return True
        if self.config.max_depth is not None and depth >= self.config.max_depth:
            return True
        return self._is_pure(indices)

    def _leaf(self, indices: np.ndarray) -> LeafPayload:
        if self.dataset.task is Task.CLASSIFICATION:
            counts = np.bincount(self.dataset.targets[indices], minlength=self.dataset.n_classes)
            return ClassLeaf(majority_label(counts, self.rng), int(indices.size))
        return fit_kde_leaf(self.dataset.targets[indices], self.config.kde_lambda)

    def _split_or_leaf(self, indices: np.ndarray, depth: int) -> Union[SplitCandidate, LeafPayload]:
        if self._should_stop(indices, depth):
            return self._leaf(indices)
        found = select_best_split(self.dataset, indices, self.config, self.rng)
        if found is None:
            return self._leaf(indices)
        return found[0]

    def grow(self, indices: np.ndarray) -> TreeNode:
        """Depth-first, left before right, with an explicit stack.

        Nodes are decided in the same order as a recursive pre-order walk, so
        the random stream is consumed identically.
        """
        root = self._split_or_leaf(indices, 0)
        if not isinstance(root, SplitCandidate):
            return root
        # frame: [split, left indices, right indices, depth, built children]
        stack = [[root, *partition(self.dataset.features, indices, root), 0, []]]
        while True:
            frame = stack[-1]
            split, left, right, depth, children = frame
            if len(children) == 2:
                stack.pop()
                node = InternalNode(split, children[0], children[1])
                if not stack:
                    return node
                stack[-1][4].append(node)
                continue
            child_indices = left if not children else right
            decided = self._split_or_leaf(child_indices, depth + 1)
            if isinstance(decided, SplitCandidate):
                stack.append(
                    [decided, *partition(self.dataset.features, child_indices, decided), depth + 1, []]
                )
            else:
                children.append(decided)


def grow_tree(
    dataset: Dataset,
    config: TrainConfig,
    seed: Union[int, np.random.SeedSequence],
) -> TreeNode:
    if dataset.n_samples == 0:
        raise EmptySampleError("cannot grow a tree on an empty dataset")
    _check_modality(dataset.task, config.estimator)
    rng = np.random.default_rng(seed)
    return _TreeGrower(dataset, config, rng).grow(np.arange(dataset.n_samples))


def train_forest(dataset: Dataset, config: TrainConfig) -> Forest:
    """Grow `config.n_trees` trees on the full dataset.

    Regression targets are standardized first; leaves live in standardized
    space and the standardizer is kept on the forest.
    """
    if dataset.n_samples == 0:
        raise EmptySampleError("cannot train on an empty dataset")
    _check_modality(dataset.task, config.estimator)
    standardizer = None
    work = dataset
    if dataset.task is Task.REGRESSION:
        standardizer = fit_standardizer(dataset.targets)
        work = dataset.with_targets(standardizer.apply(dataset.targets))
    trees = []
    for t in range(config.n_trees):
        trees.append(grow_tree(work, config, tree_seed(config.master_seed, t)))
        logger.debug("grew tree %d/%d (%d leaves)", t + 1, config.n_trees, count_leaves(trees[-1]))
    return Forest(
        trees=tuple(trees),
        task=dataset.task,
        n_outputs=dataset.n_outputs,
        n_features=dataset.n_features,
        config=config,
        standardizer=standardizer,
        label_names=dataset.label_names,
    )


# -- traversal ---------------------------------------------------------------


def route(node: TreeNode, x: np.ndarray) -> LeafPayload:
    while isinstance(node, InternalNode):
        node = node.left if x[node.split.feature] <= node.split.threshold else node.right
    return node


def iter_leaves(node: TreeNode):
    stack = [node]
    while stack:
        current = stack.pop()
        if isinstance(current, InternalNode):
            stack.append(current.right)
            stack.append(current.left)
        else:
            yield current


def count_leaves(node: TreeNode) -> int:
    return sum(1 for _ in iter_leaves(node))


def _feature_vector(forest: Forest, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (forest.n_features,):
        raise DomainError(f"expected {forest.n_features} features, got shape {x.shape}")
    return x


def _require_task(forest: Forest, task: Task) -> None:
    if forest.task is not task:
        raise DomainError(f"forest was trained for {forest.task.value}, not {task.value}")


def apply(forest: Forest, x) -> List[LeafPayload]:
    """The leaf reached in each tree."""
    x = _feature_vector(forest, x)
    return [route(tree, x) for tree in forest.trees]


# -- prediction --------------------------------------------------------------


def predict_class(forest: Forest, x, rng: Optional[np.random.Generator] = None) -> int:
    """Majority vote over trees; ties broken uniformly at random from `rng`."""
    _require_task(forest, Task.CLASSIFICATION)
    if rng is None:
        rng = np.random.default_rng(forest.config.master_seed)
    votes = np.bincount([leaf.label for leaf in apply(forest, x)], minlength=forest.n_outputs)
    return majority_label(votes, rng)


def predict_classes(
    forest: Forest, features: np.ndarray, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    if rng is None:
        rng = np.random.default_rng(forest.config.master_seed)
    return np.array([predict_class(forest, x, rng) for x in np.asarray(features)], dtype=np.int64)


def predict_regression(forest: Forest, x) -> np.ndarray:
    """De-standardized average of the per-tree leaf means."""
    _require_task(forest, Task.REGRESSION)
    means = np.mean([leaf.mean for leaf in apply(forest, x)], axis=0)
    return forest.standardizer.invert(means) if forest.standardizer is not None else means


def predict_regressions(forest: Forest, features: np.ndarray) -> np.ndarray:
    return np.array([predict_regression(forest, x) for x in np.asarray(features)])


def forest_log_density(forest: Forest, x, y, combine: str = "mixture") -> float:
    """ln p(y | x) in the units of the training targets.

    `combine="mixture"` averages tree densities, `"mean-log"` averages tree
    log-densities.
    """
    _require_task(forest, Task.REGRESSION)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != forest.n_outputs:
        raise DomainError(f"expected {forest.n_outputs}-dimensional targets, got {y.size}")
    z = forest.standardizer.apply(y) if forest.standardizer is not None else y
    per_tree = np.array([kde_log_density(leaf, z) for leaf in apply(forest, x)])
    if combine == "mixture":
        value = float(logsumexp(per_tree) - np.log(per_tree.size))
    elif combine == "mean-log":
        value = float(per_tree.mean())
    else:
        raise ConfigurationError(f"unknown density combination {combine!r}")
    if forest.standardizer is not None:
        value -= forest.standardizer.log_scale
    return value


def log_densities(
    forest: Forest, features: np.ndarray, targets: np.ndarray, combine: str = "mixture"
) -> np.ndarray:
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    return np.array(
        [forest_log_density(forest, x, y, combine) for x, y in zip(np.asarray(features), targets)]
    )

