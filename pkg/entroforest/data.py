from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    AbsoluteContinuityError,
    ConfigurationError,
    DomainError,
    EmptySampleError,
    InsufficientSampleError,
    ParseError,
)

logger = logging.getLogger(__name__)

SCALE_FLOOR = 1e-12


class Task(str, Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus targets.

    Classification targets are 0-based class indices into `label_names`;
    regression targets are an (n, d) float matrix.
    """

    features: np.ndarray
    targets: np.ndarray
    task: Task
    n_classes: int = 0
    label_names: Tuple[str, ...] = ()
    feature_names: Tuple[str, ...] = ()
    target_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        task = Task(self.task)
        features = np.asarray(self.features, dtype=float)
        if features.ndim != 2:
            raise DomainError(f"features must be an (n, p) matrix, got shape {features.shape}")
        if task is Task.CLASSIFICATION:
            targets = np.asarray(self.targets, dtype=np.int64).reshape(-1)
            k = self.n_classes or len(self.label_names) or (int(targets.max()) + 1 if targets.size else 0)
            if targets.size and (targets.min() < 0 or targets.max() >= k):
                raise DomainError(f"class labels must lie in [0, {k})")
            object.__setattr__(self, "n_classes", int(k))
        else:
            targets = np.asarray(self.targets, dtype=float)
            if targets.ndim == 1:
                targets = targets[:, None]
            if targets.ndim != 2:
                raise DomainError(f"regression targets must be (n, d), got shape {targets.shape}")
        if features.shape[0] != targets.shape[0]:
            raise DomainError(
                f"{features.shape[0]} feature rows but {targets.shape[0]} target rows"
            )
        object.__setattr__(self, "task", task)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_outputs(self) -> int:
        """K for classification, d for regression."""
        if self.task is Task.CLASSIFICATION:
            return self.n_classes
        return self.targets.shape[1]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return replace(self, features=self.features[idx], targets=self.targets[idx])

    def with_targets(self, targets: np.ndarray) -> "Dataset":
        return replace(self, targets=targets)


# -- CSV -------------------------------------------------------------------


def _sort_labels(labels: Sequence[str]) -> List[str]:
    unique = set(labels)
    try:
        return sorted(unique, key=float)
    except ValueError:
        return sorted(unique)


def _read_table(path: Path, delimiter: str) -> Tuple[List[str], List[Tuple[int, List[str]]]]:
    name = str(path)
    with path.open(newline="") as f:
        reader = csv.reader(f, delimiter=delimiter)
        rows = [(reader.line_num, row) for row in reader if row]
    if not rows:
        raise ParseError("file has no header row", path=name)
    header = [h.strip() for h in rows[0][1]]
    body = rows[1:]
    if not body:
        raise EmptySampleError(f"{name}: no data rows after the header")
    for line, row in body:
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {len(row)}", path=name, row=line
            )
    return header, body


def _parse_features(
    name: str, header: List[str], body: List[Tuple[int, List[str]]], positions: List[int]
) -> np.ndarray:
    features = np.empty((len(body), len(positions)), dtype=float)
    for r, (line, row) in enumerate(body):
        for j, pos in enumerate(positions):
            try:
                features[r, j] = float(row[pos])
            except ValueError:
                raise ParseError(
                    f"non-numeric value {row[pos]!r}", path=name, row=line, column=header[pos]
                ) from None
    return features


def load_csv(
    path: Union[str, Path],
    target_columns: Optional[Sequence[str]],
    task: Union[Task, str],
    n_targets: int = 1,
    delimiter: str = ",",
) -> Dataset:
    """Read a comma-separated file with one header row.

    Columns named in `target_columns` (or, when that is None, the last
    `n_targets` columns) become targets, every other column a numeric
    feature. Classification takes exactly one target column whose values may
    be arbitrary strings; they are mapped to 0-based indices in sorted order
    (numeric order when every label parses as a number).
    """
    task = Task(task)
    path = Path(path)
    name = str(path)
    header, body = _read_table(path, delimiter)

    if target_columns is None:
        if not 1 <= n_targets < len(header):
            raise ConfigurationError(f"cannot take {n_targets} target column(s) from {len(header)}")
        targets = header[len(header) - n_targets:]
    else:
        targets = list(target_columns)
    if not targets:
        raise ConfigurationError("at least one target column is required")
    if task is Task.CLASSIFICATION and len(targets) != 1:
        raise ConfigurationError("classification takes exactly one target column")
    for col in targets:
        if col not in header:
            raise ParseError(f"unknown target column {col!r}", path=name, row=1, column=col)
    target_pos = [header.index(col) for col in targets]
    feature_pos = [i for i in range(len(header)) if i not in target_pos]

    features = _parse_features(name, header, body, feature_pos)
    feature_names = tuple(header[i] for i in feature_pos)
    raw_targets = [[row[pos].strip() for pos in target_pos] for _, row in body]

    if task is Task.CLASSIFICATION:
        labels = [t[0] for t in raw_targets]
        names = _sort_labels(labels)
        mapping = {label: i for i, label in enumerate(names)}
        logger.debug("%s: label mapping %s", name, mapping)
        return Dataset(
            features=features,
            targets=np.array([mapping[label] for label in labels], dtype=np.int64),
            task=task,
            n_classes=len(names),
            label_names=tuple(names),
            feature_names=feature_names,
            target_names=tuple(targets),
        )

    values = _parse_features(name, header, body, target_pos)
    return Dataset(
        features=features,
        targets=values,
        task=task,
        feature_names=feature_names,
        target_names=tuple(targets),
    )


def load_features_csv(
    path: Union[str, Path], exclude: Sequence[str] = (), delimiter: str = ","
) -> np.ndarray:
    """Numeric matrix of every column not named in `exclude`."""
    path = Path(path)
    header, body = _read_table(path, delimiter)
    positions = [i for i, col in enumerate(header) if col not in set(exclude)]
    return _parse_features(str(path), header, body, positions)


# -- dequantization ----------------------------------------------------------


class BinWidths(NamedTuple):
    widths: np.ndarray
    degenerate: np.ndarray


def bin_widths(targets: np.ndarray) -> BinWidths:
    """Smallest positive gap between sorted values, per dimension.

    Dimensions whose values are all identical get width 0 and are flagged.
    """
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] < 2:
        raise InsufficientSampleError("bin widths need at least 2 samples")
    gaps = np.diff(np.sort(y, axis=0), axis=0)
    widths = np.zeros(y.shape[1])
    for j in range(y.shape[1]):
        positive = gaps[:, j][gaps[:, j] > 0]
        if positive.size:
            widths[j] = positive.min()
    return BinWidths(widths, widths == 0.0)


def has_duplicate_rows(targets: np.ndarray) -> bool:
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    return np.unique(y, axis=0).shape[0] < y.shape[0]


def dequantize(targets: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Add U(-h/2, h/2) noise per dimension when any two target rows coincide.

    Targets without duplicate rows are returned unchanged. Dimensions of
    width 0 are left untouched.
    """
    y = np.asarray(targets, dtype=float)
    if y.shape[0] < 2 or not has_duplicate_rows(y):
        return y
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    widths, degenerate = bin_widths(y)
    if np.any(degenerate):
        logger.warning(
            "dequantization skips constant target dimension(s) %s",
            np.flatnonzero(degenerate).tolist(),
        )
    noise = rng.uniform(-0.5, 0.5, size=y.shape) * widths
    out = y + noise
    return out[:, 0] if squeeze else out


def check_absolute_continuity(targets: np.ndarray) -> None:
    """Reject targets with duplicate rows and a zero-width dimension."""
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] < 2 or not has_duplicate_rows(y):
        return
    _, degenerate = bin_widths(y)
    if np.any(degenerate):
        raise AbsoluteContinuityError(
            "targets repeat and dimension(s) "
            f"{np.flatnonzero(degenerate).tolist()} have no positive spacing; "
            "they cannot be dequantized into a density"
        )


# -- standardization ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, targets: np.ndarray) -> np.ndarray:
        return (np.asarray(targets, dtype=float) - self.mean) / self.scale

    def invert(self, predictions: np.ndarray) -> np.ndarray:
        return np.asarray(predictions, dtype=float) * self.scale + self.mean

    @property
    def log_scale(self) -> float:
        """sum_j ln scale_j, the log-Jacobian of `invert`."""
        return float(np.sum(np.log(self.scale)))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Standardizer":
        return cls(np.asarray(data["mean"], dtype=float), np.asarray(data["scale"], dtype=float))


def fit_standardizer(targets: np.ndarray) -> Standardizer:
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] < 2:
        raise InsufficientSampleError("standardization needs at least 2 samples")
    return Standardizer(y.mean(axis=0), np.maximum(y.std(axis=0, ddof=1), SCALE_FLOOR))


def apply(s: Standardizer, targets: np.ndarray) -> np.ndarray:
    return s.apply(targets)


def invert(s: Standardizer, predictions: np.ndarray) -> np.ndarray:
    return s.invert(predictions)


# -- splitting ---------------------------------------------------------------


def split_indices(
    n: int, proportions: Sequence[float], rng: np.random.Generator
) -> Tuple[np.ndarray, ...]:
    """Disjoint index sets from one seeded shuffle of range(n).

    A proportion of 0 disables that subset. When the proportions sum to 1 the
    last enabled subset takes the remainder.
    """
    props = [float(p) for p in proportions]
    if any(p < 0 for p in props) or not any(p > 0 for p in props):
        raise ConfigurationError(f"invalid split proportions {props}")
    total = sum(props)
    if total > 1.0 + 1e-9:
        raise ConfigurationError(f"split proportions sum to {total}, more than 1")
    sizes = [int(np.floor(p * n + 1e-9)) for p in props]
    if abs(total - 1.0) <= 1e-9:
        last = max(i for i, p in enumerate(props) if p > 0)
        sizes[last] = n - sum(sizes[:last]) - sum(sizes[last + 1:])
    for p, size in zip(props, sizes):
        if p > 0 and size <= 0:
            raise ConfigurationError(
                f"proportion {p} of {n} samples yields an empty subset"
            )
    order = rng.permutation(n)
    bounds = np.cumsum([0] + sizes)
    return tuple(np.sort(order[bounds[i]:bounds[i + 1]]) for i in range(len(sizes)))


def split_dataset(
    ds: Dataset, proportions: Sequence[float], rng: np.random.Generator
) -> Tuple[Dataset, ...]:
    return tuple(ds.subset(idx) for idx in split_indices(ds.n_samples, proportions, rng))


def subsample_without_replacement(
    rows: np.ndarray, m: int, rng: np.random.Generator
) -> np.ndarray:
    """At most `m` rows, a uniformly random subset kept in original order."""
    if m < 1:
        raise ConfigurationError(f"subsample size must be positive, got {m}")
    rows = np.asarray(rows)
    if rows.shape[0] <= m:
        return rows
    return rows[np.sort(rng.choice(rows.shape[0], size=m, replace=False))]
