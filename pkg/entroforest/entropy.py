"""Discrete and differential entropy estimators and the split score.

Discrete estimators take a `ClassHistogram`; differential estimators take a
target matrix (a finite float array of shape (n, d)). All entropies are in
nats. Estimators are pure given an explicit random stream, which only the
1-NN estimator consumes (for subsampling).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from scipy import special

from . import neighbors
from .data import subsample_without_replacement
from .errors import (
    ConfigurationError,
    DomainError,
    EmptySampleError,
    InsufficientSampleError,
)
from .numerics import (
    EULER_GAMMA,
    Estimate,
    digamma,
    log_det_psd,
    sample_covariance,
    scatter_matrix,
    unit_ball_volume,
)

logger = logging.getLogger(__name__)

# Floor applied to zero nearest-neighbor distances (exact duplicates).
RHO_FLOOR = 1e-12

DEFAULT_SUBSAMPLE_SIZE = 256


class Estimator(str, Enum):
    NAIVE = "naive"
    MILLER = "miller"
    GRASSBERGER = "grassberger"
    MVN_PLUGIN = "mvn-plugin"
    MVN_DIAG = "mvn-diag"
    MVN_UMVUE = "mvn-umvue"
    ONE_NN = "one-nn"

    @property
    def is_discrete(self) -> bool:
        return self in _DISCRETE


_DISCRETE = frozenset({Estimator.NAIVE, Estimator.MILLER, Estimator.GRASSBERGER})


class UmvueVariant(str, Enum):
    # Scatter about the sample mean, psi((n - j) / 2): unknown-mean data.
    CENTERED = "centered"
    # Raw scatter, psi((n + 1 - j) / 2): zero-mean data.
    AS_PRINTED = "as-printed"


@dataclass(frozen=True)
class EstimatorKind:
    """Which entropy estimator to use, plus its tuning knobs."""

    tag: Estimator
    subsample_size: int = DEFAULT_SUBSAMPLE_SIZE
    umvue_variant: UmvueVariant = UmvueVariant.CENTERED

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "tag", Estimator(self.tag))
            object.__setattr__(self, "umvue_variant", UmvueVariant(self.umvue_variant))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        if int(self.subsample_size) < 2:
            raise ConfigurationError(
                f"subsample_size must be at least 2, got {self.subsample_size}"
            )

    @classmethod
    def parse(cls, name: str, **kwargs) -> "EstimatorKind":
        return cls(tag=name.strip().lower().replace("_", "-"), **kwargs)

    @property
    def is_discrete(self) -> bool:
        return self.tag.is_discrete

    def min_samples(self, dim: int = 1) -> int:
        """Smallest sample count the estimator accepts in `dim` dimensions."""
        if self.is_discrete:
            return 1
        if self.tag is Estimator.MVN_UMVUE:
            return dim + 2 if self.umvue_variant is UmvueVariant.CENTERED else dim + 1
        return 2

    def to_dict(self) -> dict:
        return {
            "tag": self.tag.value,
            "subsample_size": int(self.subsample_size),
            "umvue_variant": self.umvue_variant.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EstimatorKind":
        return cls(
            tag=data["tag"],
            subsample_size=int(data.get("subsample_size", DEFAULT_SUBSAMPLE_SIZE)),
            umvue_variant=data.get("umvue_variant", UmvueVariant.CENTERED.value),
        )


@dataclass(frozen=True, eq=False)
class ClassHistogram:
    """Per-class counts h_k over a problem with `n_classes` classes.

    `n_classes` defaults to the length of `counts`; a larger value pads the
    counts with empty classes.
    """

    counts: np.ndarray
    n_classes: Optional[int] = None
    n: int = field(init=False)

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise DomainError("class counts must be one-dimensional")
        if counts.size and (np.any(counts < 0) or np.any(counts != np.round(counts))):
            raise DomainError("class counts must be non-negative integers")
        counts = counts.astype(np.int64)
        k = counts.size if self.n_classes is None else int(self.n_classes)
        if k < counts.size:
            raise DomainError(f"{counts.size} counts given for a {k}-class problem")
        if k > counts.size:
            counts = np.concatenate([counts, np.zeros(k - counts.size, dtype=np.int64)])
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "n_classes", k)
        object.__setattr__(self, "n", int(counts.sum()))

    @classmethod
    def from_labels(cls, labels: Sequence[int], n_classes: int) -> "ClassHistogram":
        labels = np.asarray(labels, dtype=np.int64)
        return cls(np.bincount(labels, minlength=n_classes), n_classes)

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class JointClassSplitDistribution:
    """A K x 2 table of probabilities p(y = k, b), column 0 = left."""

    table: np.ndarray

    def __post_init__(self) -> None:
        table = np.asarray(self.table, dtype=float)
        if table.ndim != 2 or table.shape[1] != 2:
            raise DomainError(f"expected a K x 2 probability table, got shape {table.shape}")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise DomainError("probability table has negative or non-finite entries")
        if abs(table.sum() - 1.0) > 1e-9:
            raise DomainError(f"probability table sums to {table.sum()!r}, not 1")
        object.__setattr__(self, "table", table)

    @classmethod
    def from_conditionals(
        cls, class_marginal: Sequence[float], left_probability: Sequence[float]
    ) -> "JointClassSplitDistribution":
        """Build p(y, b) = pi_k * [q_k, 1 - q_k]."""
        pi = np.asarray(class_marginal, dtype=float)
        q = np.asarray(left_probability, dtype=float)
        if pi.shape != q.shape:
            raise DomainError("class marginal and left probabilities differ in length")
        if np.any(q < 0) or np.any(q > 1):
            raise DomainError("left probabilities must lie in [0, 1]")
        return cls(np.column_stack([pi * q, pi * (1.0 - q)]))


TargetMatrix = np.ndarray
Side = Union[ClassHistogram, TargetMatrix]


def as_target_matrix(samples) -> TargetMatrix:
    """Coerce to a finite float (n, d) array; 1-d input becomes (n, 1)."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise DomainError(f"expected an (n, d) target matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("target matrix has non-finite entries")
    return arr


# -- discrete estimators ---------------------------------------------------


def _nonempty(h: ClassHistogram) -> None:
    if h.n == 0:
        raise EmptySampleError("entropy of an empty histogram")


def naive_entropy(h: ClassHistogram) -> float:
    _nonempty(h)
    n = h.n
    return float(np.log(n) - special.xlogy(h.counts, h.counts).sum() / n)


def miller_entropy(h: ClassHistogram) -> float:
    """Naive estimate plus the first-order bias term (K - 1) / (2n)."""
    return naive_entropy(h) + (h.n_classes - 1) / (2.0 * h.n)


def grassberger_g(h):
    """G(h) = psi(h) + (-1)^h / 2 * (psi((h + 1) / 2) - psi(h / 2)), h >= 1."""
    arr = np.asarray(h)
    if np.any(arr < 1) or np.any(arr != np.round(arr)):
        raise DomainError("grassberger_g requires positive integer counts")
    arr = arr.astype(float)
    sign = np.where(np.mod(arr, 2) == 0, 1.0, -1.0)
    g = digamma(arr) + 0.5 * sign * (digamma((arr + 1.0) / 2.0) - digamma(arr / 2.0))
    return float(g) if np.ndim(g) == 0 else g


def grassberger_entropy(h: ClassHistogram) -> float:
    _nonempty(h)
    counts = h.counts[h.counts > 0]
    return float(np.log(h.n) - np.dot(counts, grassberger_g(counts)) / h.n)


# -- differential estimators -----------------------------------------------


def _require(samples: TargetMatrix, minimum: int, name: str) -> TargetMatrix:
    y = as_target_matrix(samples)
    if y.shape[0] < minimum:
        raise InsufficientSampleError(
            f"{name} needs at least {minimum} samples, got {y.shape[0]}"
        )
    return y


def _normal_entropy(cov: np.ndarray) -> Estimate:
    d = cov.shape[0]
    log_det = log_det_psd(cov)
    value = 0.5 * d * (1.0 + np.log(2.0 * np.pi)) + 0.5 * log_det
    return Estimate(value, log_det.degenerate)


def mvn_plugin_entropy(samples: TargetMatrix) -> Estimate:
    """Entropy of the Normal fitted by the centered sample covariance."""
    y = _require(samples, 2, "mvn_plugin_entropy")
    return _normal_entropy(sample_covariance(y))


def mvn_diag_entropy(samples: TargetMatrix) -> Estimate:
    y = _require(samples, 2, "mvn_diag_entropy")
    return _normal_entropy(np.diag(np.diag(sample_covariance(y))))


def mvn_umvue_entropy(
    samples: TargetMatrix, variant: UmvueVariant = UmvueVariant.CENTERED
) -> Estimate:
    """Minimum-variance unbiased estimate of a Normal's entropy."""
    variant = UmvueVariant(variant)
    centered = variant is UmvueVariant.CENTERED
    y = as_target_matrix(samples)
    n, d = y.shape
    y = _require(y, d + 2 if centered else d + 1, "mvn_umvue_entropy")
    log_det = log_det_psd(scatter_matrix(y, center=centered))
    j = np.arange(1, d + 1, dtype=float)
    offset = 0.0 if centered else 1.0
    correction = float(np.sum(digamma((n + offset - j) / 2.0)))
    value = 0.5 * d * np.log(np.e * np.pi) + 0.5 * log_det - 0.5 * correction
    return Estimate(value, log_det.degenerate)


def one_nn_entropy(
    samples: TargetMatrix,
    rng: Optional[np.random.Generator] = None,
    subsample_size: int = DEFAULT_SUBSAMPLE_SIZE,
) -> Estimate:
    """Kozachenko-Leonenko estimate from 1-NN distances of a subsample.

    At most `subsample_size` rows are kept, drawn without replacement from
    `rng`. Zero distances are floored at RHO_FLOOR and flag the result.
    """
    y = _require(samples, 2, "one_nn_entropy")
    if rng is None:
        rng = np.random.default_rng(0)
    y = subsample_without_replacement(y, subsample_size, rng)
    m, d = y.shape
    rho = neighbors.all_1nn_distances(y)
    degenerate = bool(np.any(rho <= 0.0))
    if degenerate:
        logger.debug("%d zero nearest-neighbor distances floored", int(np.sum(rho <= 0.0)))
    rho = np.maximum(rho, RHO_FLOOR)
    value = (
        d * float(np.mean(np.log(rho)))
        + np.log(m - 1.0)
        + EULER_GAMMA
        + np.log(unit_ball_volume(d))
    )
    return Estimate(value, degenerate)


# -- dispatch --------------------------------------------------------------


def discrete_entropy(h: ClassHistogram, kind: EstimatorKind) -> float:
    if not isinstance(h, ClassHistogram):
        raise ConfigurationError(f"{kind.tag.value} needs a class histogram")
    if kind.tag is Estimator.NAIVE:
        return naive_entropy(h)
    if kind.tag is Estimator.MILLER:
        return miller_entropy(h)
    if kind.tag is Estimator.GRASSBERGER:
        return grassberger_entropy(h)
    raise ConfigurationError(f"{kind.tag.value} is not a discrete entropy estimator")


def differential_entropy(
    samples: TargetMatrix,
    kind: EstimatorKind,
    rng: Optional[np.random.Generator] = None,
) -> Estimate:
    if isinstance(samples, ClassHistogram):
        raise ConfigurationError(f"{kind.tag.value} needs continuous targets, got a histogram")
    if kind.tag is Estimator.MVN_PLUGIN:
        return mvn_plugin_entropy(samples)
    if kind.tag is Estimator.MVN_DIAG:
        return mvn_diag_entropy(samples)
    if kind.tag is Estimator.MVN_UMVUE:
        return mvn_umvue_entropy(samples, kind.umvue_variant)
    if kind.tag is Estimator.ONE_NN:
        return one_nn_entropy(samples, rng, kind.subsample_size)
    raise ConfigurationError(f"{kind.tag.value} is not a differential entropy estimator")


def entropy(side: Side, kind: EstimatorKind, rng: Optional[np.random.Generator] = None) -> float:
    if kind.is_discrete:
        return discrete_entropy(side, kind)
    return differential_entropy(side, kind, rng)


def _size(side: Side) -> int:
    if isinstance(side, ClassHistogram):
        return side.n
    return int(np.shape(side)[0])


def split_score(
    left: Side,
    right: Side,
    kind: EstimatorKind,
    rng: Optional[np.random.Generator] = None,
) -> Estimate:
    """-(|L|/n) H(L) - (|R|/n) H(R); an empty side contributes exactly 0."""
    n_left, n_right = _size(left), _size(right)
    total = n_left + n_right
    if total == 0:
        raise EmptySampleError("split score of two empty sides")
    score = 0.0
    degenerate = False
    for side, size in ((left, n_left), (right, n_right)):
        if size == 0:
            continue
        h = entropy(side, kind, rng)
        score -= (size / total) * h
        degenerate = degenerate or getattr(h, "degenerate", False)
    return Estimate(score, degenerate)


def estimate_info_gain(
    parent: Side,
    left: Side,
    right: Side,
    kind: EstimatorKind,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """H(parent) - (|L|/n) H(L) - (|R|/n) H(R) under one estimator."""
    return entropy(parent, kind, rng) + split_score(left, right, kind, rng)


def multinomial_info_gain_exact(joint: JointClassSplitDistribution) -> float:
    """Mutual information between class and branch of a known table."""
    p = joint.table
    p_y = p.sum(axis=1, keepdims=True)
    p_b = p.sum(axis=0, keepdims=True)
    expected = p_y * p_b
    mask = p > 0
    mi = float(np.sum(p[mask] * np.log(p[mask] / expected[mask])))
    return max(mi, 0.0)
