"""k-d tree and all-points 1-nearest-neighbor distances.

The tree splits at the median of the widest-spread coordinate until a node
holds at most `leaf_capacity` points. Queries exclude the query point by
index, not by value, so exact duplicates have distance 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError, EmptySampleError, InsufficientSampleError

logger = logging.getLogger(__name__)

DEFAULT_LEAF_CAPACITY = 16


@dataclass(frozen=True, eq=False)
class KdNode:
    lower: np.ndarray
    upper: np.ndarray
    indices: Optional[np.ndarray] = None
    split_dim: int = -1
    split_value: float = float("nan")
    left: Optional["KdNode"] = None
    right: Optional["KdNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.indices is not None


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise DomainError(f"expected an (n, d) point matrix, got shape {arr.shape}")
    return arr


class KdTree:
    """Immutable k-d tree over the rows of a point matrix."""

    def __init__(self, points, leaf_capacity: int = DEFAULT_LEAF_CAPACITY) -> None:
        self.points = _as_points(points)
        if self.points.shape[0] == 0:
            raise EmptySampleError("cannot build a k-d tree over zero points")
        if leaf_capacity < 1:
            raise DomainError(f"leaf_capacity must be positive, got {leaf_capacity}")
        self.leaf_capacity = int(leaf_capacity)
        self.root = self._build(np.arange(self.points.shape[0]))

    def _build(self, idx: np.ndarray) -> KdNode:
        pts = self.points[idx]
        lower, upper = pts.min(axis=0), pts.max(axis=0)
        if idx.size <= self.leaf_capacity:
            return KdNode(lower, upper, indices=idx)
        dim = int(np.argmax(upper - lower))
        order = idx[np.argsort(pts[:, dim], kind="stable")]
        mid = idx.size // 2
        return KdNode(
            lower,
            upper,
            split_dim=dim,
            split_value=float(self.points[order[mid - 1], dim]),
            left=self._build(order[:mid]),
            right=self._build(order[mid:]),
        )

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def depth(self) -> int:
        """Number of edges on the longest root-to-leaf path."""

        def _depth(node: KdNode) -> int:
            if node.is_leaf:
                return 0
            return 1 + max(_depth(node.left), _depth(node.right))

        return _depth(self.root)

    def leaves(self) -> Iterator[KdNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.append(node.right)
                stack.append(node.left)

    # -- queries -----------------------------------------------------------

    def _scan_leaf(
        self, leaf: KdNode, queries: np.ndarray, best: np.ndarray, best_idx: np.ndarray
    ) -> None:
        diff = self.points[queries][:, None, :] - self.points[leaf.indices][None, :, :]
        d2 = np.einsum("qld,qld->ql", diff, diff)
        d2[queries[:, None] == leaf.indices[None, :]] = np.inf
        nearest = np.argmin(d2, axis=1)
        candidate = d2[np.arange(queries.size), nearest]
        improved = candidate < best[queries]
        best[queries[improved]] = candidate[improved]
        best_idx[queries[improved]] = leaf.indices[nearest[improved]]

    def _search(
        self, node: KdNode, queries: np.ndarray, best: np.ndarray, best_idx: np.ndarray
    ) -> None:
        q = self.points[queries]
        gap = np.maximum(node.lower - q, 0.0) + np.maximum(q - node.upper, 0.0)
        queries = queries[np.einsum("qd,qd->q", gap, gap) < best[queries]]
        if queries.size == 0:
            return
        if node.is_leaf:
            self._scan_leaf(node, queries, best, best_idx)
            return
        self._search(node.left, queries, best, best_idx)
        self._search(node.right, queries, best, best_idx)

    def _nearest_all(self, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n = len(self)
        if n < 2:
            raise InsufficientSampleError("nearest neighbors need at least 2 points")
        best = np.full(n, np.inf)
        best_idx = np.full(n, -1, dtype=np.int64)
        # Seeding each query with its own leaf tightens the pruning bound.
        for leaf in self.leaves():
            own = leaf.indices[np.isin(leaf.indices, queries)]
            if own.size:
                self._scan_leaf(leaf, own, best, best_idx)
        self._search(self.root, queries, best, best_idx)
        return np.sqrt(best[queries]), best_idx[queries]

    def nearest(self, i: int) -> Tuple[int, float]:
        """Index of and distance to the nearest other point of point `i`."""
        dist, idx = self._nearest_all(np.array([int(i)]))
        return int(idx[0]), float(dist[0])

    def all_1nn_distances(self) -> np.ndarray:
        dist, _ = self._nearest_all(np.arange(len(self)))
        return dist


def build(points, leaf_capacity: int = DEFAULT_LEAF_CAPACITY) -> KdTree:
    return KdTree(points, leaf_capacity=leaf_capacity)


def all_1nn_distances(points, leaf_capacity: int = DEFAULT_LEAF_CAPACITY) -> np.ndarray:
    """rho_i = min over j != i of ||y_j - y_i||, via a k-d tree."""
    pts = _as_points(points)
    if pts.shape[0] < 2:
        raise InsufficientSampleError("nearest neighbors need at least 2 points")
    return KdTree(pts, leaf_capacity).all_1nn_distances()


def brute_force_1nn(points) -> np.ndarray:
    """O(n^2) reference for `all_1nn_distances`."""
    pts = _as_points(points)
    if pts.shape[0] < 2:
        raise InsufficientSampleError("nearest neighbors need at least 2 points")
    dist = cdist(pts, pts)
    np.fill_diagonal(dist, np.inf)
    return dist.min(axis=1)
