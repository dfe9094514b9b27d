"""Leaf payloads: majority class labels and kernel density estimates."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, EmptySampleError
from .numerics import log_det_psd, psd_sqrt, sample_covariance

logger = logging.getLogger(__name__)

# Regularization used instead of lambda = 0 when the leaf covariance is singular.
LAMBDA_FLOOR = 1e-8

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ClassLeaf:
    label: int
    n_samples: int = 0

    def to_dict(self) -> dict:
        return {"label": int(self.label), "n_samples": int(self.n_samples)}


@dataclass(frozen=True, eq=False)
class KdeLeaf:
    """Gaussian KDE over the samples that reached a leaf.

    p(y) = (1/n) sum_i N(B^-1 (y - y_i); 0, I) / det B
    """

    targets: np.ndarray
    mean: np.ndarray
    bandwidth_sqrt: np.ndarray
    log_det_bandwidth: float
    degenerate: bool = False

    @property
    def n_samples(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.targets.shape[1]

    @cached_property
    def bandwidth_inv(self) -> np.ndarray:
        return np.linalg.inv(self.bandwidth_sqrt)

    def to_dict(self) -> dict:
        return {
            "targets": self.targets.tolist(),
            "mean": self.mean.tolist(),
            "bandwidth_sqrt": self.bandwidth_sqrt.tolist(),
            "log_det_bandwidth": float(self.log_det_bandwidth),
            "degenerate": bool(self.degenerate),
        }


LeafPayload = Union[ClassLeaf, KdeLeaf]


def majority_label(counts: np.ndarray, rng: np.random.Generator) -> int:
    """Most frequent class; ties broken uniformly at random."""
    counts = np.asarray(counts)
    winners = np.flatnonzero(counts == counts.max())
    if winners.size == 1:
        return int(winners[0])
    return int(rng.choice(winners))


def _scott_bandwidth(sigma: np.ndarray, n: int) -> Tuple[np.ndarray, float]:
    d = sigma.shape[0]
    bandwidth = n ** (-1.0 / (d + 4)) * psd_sqrt(sigma)
    # log|B| of the matrix actually used by the kernel, without pivot clamping
    sign, log_det = np.linalg.slogdet(bandwidth)
    if sign <= 0 or not np.isfinite(log_det):
        return bandwidth, -np.inf
    return bandwidth, float(log_det)


def fit_kde_leaf(targets: np.ndarray, lam: float) -> KdeLeaf:
    """Scott's-rule bandwidth B = n^(-1/(d+4)) (C + lam I)^(1/2).

    C is the centered sample covariance (zero for a single sample). When
    C + lam I is singular (lam = 0, or lam too small to survive rounding),
    lam is raised by LAMBDA_FLOOR and the leaf is flagged.
    """
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, d = y.shape
    if n == 0:
        raise EmptySampleError("cannot fit a density to an empty leaf")
    if lam < 0:
        raise DomainError(f"kde regularization must be non-negative, got {lam}")
    cov = sample_covariance(y) if n >= 2 else np.zeros((d, d))
    sigma = cov + lam * np.eye(d)
    degenerate = False
    if lam == 0 and log_det_psd(sigma).degenerate:
        logger.warning("singular leaf covariance with lambda=0; using lambda=%g", LAMBDA_FLOOR)
        sigma = cov + LAMBDA_FLOOR * np.eye(d)
        degenerate = True
    bandwidth, log_det_bandwidth = _scott_bandwidth(sigma, n)
    if not np.isfinite(log_det_bandwidth):
        logger.warning(
            "leaf bandwidth singular with lambda=%g; adding %g", lam, LAMBDA_FLOOR
        )
        sigma = sigma + LAMBDA_FLOOR * np.eye(d)
        degenerate = True
        bandwidth, log_det_bandwidth = _scott_bandwidth(sigma, n)
    return KdeLeaf(
        targets=y,
        mean=y.mean(axis=0),
        bandwidth_sqrt=bandwidth,
        log_det_bandwidth=log_det_bandwidth,
        degenerate=degenerate,
    )


def kde_log_density(leaf: KdeLeaf, y: np.ndarray):
    """ln p(y) for one point (shape (d,)) or a batch (shape (m, d))."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    points = y[None, :] if single else y
    if points.ndim != 2 or points.shape[1] != leaf.dim:
        raise DomainError(f"expected {leaf.dim}-dimensional targets, got shape {y.shape}")
    diff = points[:, None, :] - leaf.targets[None, :, :]
    z = diff @ leaf.bandwidth_inv.T
    log_kernel = -0.5 * np.einsum("mnd,mnd->mn", z, z) - 0.5 * leaf.dim * _LOG_2PI
    out = logsumexp(log_kernel, axis=1) - np.log(leaf.n_samples) - leaf.log_det_bandwidth
    return float(out[0]) if single else out
