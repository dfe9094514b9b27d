"""Special functions and small dense linear algebra used by the estimators.

Everything here is a pure function of its inputs. Matrices are plain
`numpy.ndarray` objects; symmetric positive semi-definite inputs are checked
with the tolerances below rather than wrapped in a dedicated type.
"""

from __future__ import annotations

import logging
from typing import Optional, Union

import numpy as np
import scipy.linalg as la
from scipy import special

from .errors import DomainError, InsufficientSampleError, NumericError

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)

# Pivot floor for log-determinants of singular scatter matrices.
EPS_DET = 1e-12

_SYMMETRY_RTOL = 1e-12
_PSD_RTOL = 1e-10

ArrayOrFloat = Union[float, np.ndarray]


class Estimate(float):
    """A float that remembers whether it was produced from clamped input.

    Arithmetic on an `Estimate` yields a plain float; callers that combine
    estimates propagate the `degenerate` flag explicitly.
    """

    degenerate: bool

    def __new__(cls, value: float, degenerate: bool = False) -> "Estimate":
        obj = super().__new__(cls, value)
        obj.degenerate = bool(degenerate)
        return obj

    def __repr__(self) -> str:
        if self.degenerate:
            return f"Estimate({float(self)!r}, degenerate=True)"
        return f"Estimate({float(self)!r})"


def _positive_argument(x: ArrayOrFloat, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(arr > 0):
        raise DomainError(f"{name} requires x > 0")
    return arr


def _scalar_or_array(arr: np.ndarray) -> ArrayOrFloat:
    return float(arr) if arr.ndim == 0 else arr


def digamma(x: ArrayOrFloat) -> ArrayOrFloat:
    """psi(x) for x > 0 (scalar or elementwise)."""
    arr = _positive_argument(x, "digamma")
    return _scalar_or_array(special.digamma(arr))


def ln_gamma(x: ArrayOrFloat) -> ArrayOrFloat:
    """ln Gamma(x) for x > 0 (scalar or elementwise)."""
    arr = _positive_argument(x, "ln_gamma")
    return _scalar_or_array(special.gammaln(arr))


def unit_ball_volume(d: int) -> float:
    """Volume pi^(d/2) / Gamma(1 + d/2) of the d-dimensional unit ball."""
    if int(d) != d or d < 1:
        raise DomainError(f"unit_ball_volume requires a positive integer dimension, got {d!r}")
    return float(np.exp(0.5 * d * np.log(np.pi) - special.gammaln(1.0 + 0.5 * d)))


def _as_samples(samples: np.ndarray) -> np.ndarray:
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise DomainError(f"expected an (n, d) sample matrix, got shape {arr.shape}")
    return arr


def scatter_matrix(samples: np.ndarray, center: bool = True) -> np.ndarray:
    """Sum of outer products sum_i y_i y_i^T, about the sample mean if `center`."""
    y = _as_samples(samples)
    if y.shape[0] == 0:
        raise InsufficientSampleError("scatter matrix of an empty sample")
    if center:
        y = y - y.mean(axis=0)
    s = y.T @ y
    return 0.5 * (s + s.T)


def sample_covariance(samples: np.ndarray, center: bool = True, ddof: Optional[int] = None) -> np.ndarray:
    """Scatter matrix divided by n - ddof.

    `ddof` defaults to 1 for the centered covariance and 0 for the uncentered
    second-moment matrix.
    """
    y = _as_samples(samples)
    if ddof is None:
        ddof = 1 if center else 0
    n = y.shape[0]
    if n - ddof < 1:
        raise InsufficientSampleError(
            f"covariance needs at least {ddof + 1} samples, got {n}"
        )
    return scatter_matrix(y, center=center) / (n - ddof)


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {arr.shape}")
    scale = float(np.max(np.abs(arr))) if arr.size else 0.0
    if np.any(np.abs(arr - arr.T) > _SYMMETRY_RTOL * scale):
        raise DomainError("matrix is not symmetric")
    return arr


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root S with S @ S == m.

    Eigenvalues slightly below zero (within 1e-10 * trace / d) are clamped.
    """
    arr = _check_symmetric(m)
    d = arr.shape[0]
    try:
        w, v = np.linalg.eigh(arr)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition did not converge: {exc}") from exc
    tol = _PSD_RTOL * abs(float(np.trace(arr))) / d
    if w.size and w.min() < -tol:
        raise DomainError(f"matrix is not positive semi-definite (min eigenvalue {w.min():.3e})")
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return 0.5 * (root + root.T)


def log_det_psd(m: np.ndarray) -> Estimate:
    """ln det(m) from the Cholesky pivots, clamped at EPS_DET.

    When the factorization fails the eigenvalues stand in for the pivots. A
    clamped result is returned with `degenerate=True` rather than raising, so
    that singular node covariances still score finitely.
    """
    arr = _check_symmetric(m)
    try:
        chol = la.cholesky(arr, lower=True)
        pivots = np.diag(chol) ** 2
    except la.LinAlgError:
        pivots = np.linalg.eigvalsh(arr)
    degenerate = bool(np.any(pivots < EPS_DET))
    if degenerate:
        logger.debug("clamping log-determinant pivots %s at %g", pivots, EPS_DET)
    return Estimate(float(np.sum(np.log(np.maximum(pivots, EPS_DET)))), degenerate)
