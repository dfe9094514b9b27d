import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from entroforest import leaves
from entroforest.errors import DomainError, EmptySampleError


def _unit_variance(n, seed=0):
    z = np.random.default_rng(seed).normal(size=n)
    z -= z.mean()
    return (z / z.std(ddof=1))[:, None]


def test_scott_bandwidth_unit_variance():
    leaf = leaves.fit_kde_leaf(_unit_variance(16), lam=0.0)
    assert leaf.bandwidth_sqrt[0, 0] == pytest.approx(16 ** (-1 / 5), abs=1e-12)
    assert not leaf.degenerate


def test_single_sample_uses_regularization_only():
    leaf = leaves.fit_kde_leaf([[3.0]], lam=0.01)
    assert leaf.bandwidth_sqrt[0, 0] == pytest.approx(0.1, abs=1e-12)
    np.testing.assert_array_equal(leaf.mean, [3.0])


def test_two_dimensional_scott_bandwidth():
    # 64 rows whose centered covariance is exactly diag(4, 1)
    signs = np.array([[(-1) ** (i // 8), (-1) ** i] for i in range(64)], dtype=float)
    y = signs * np.sqrt(63 / 64) * np.array([2.0, 1.0])
    leaf = leaves.fit_kde_leaf(y, lam=0.0)
    np.testing.assert_allclose(
        leaf.bandwidth_sqrt, 64 ** (-1 / 6) * np.diag([2.0, 1.0]), atol=1e-12
    )


def test_singular_covariance_falls_back_to_floor():
    leaf = leaves.fit_kde_leaf(np.ones((5, 1)), lam=0.0)
    assert leaf.degenerate
    assert leaf.bandwidth_sqrt[0, 0] == pytest.approx(5 ** (-1 / 5) * math.sqrt(leaves.LAMBDA_FLOOR))


def test_fit_rejects_bad_input():
    with pytest.raises(EmptySampleError):
        leaves.fit_kde_leaf(np.empty((0, 1)), lam=0.1)
    with pytest.raises(DomainError):
        leaves.fit_kde_leaf([[1.0], [2.0]], lam=-1.0)


def test_kde_log_density_at_mode_of_single_kernel():
    leaf = leaves.fit_kde_leaf([[0.0]], lam=1.0)
    assert leaves.kde_log_density(leaf, [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)


def test_kde_log_density_is_symmetric():
    leaf = leaves.fit_kde_leaf([[-1.0], [1.0]], lam=0.0)
    for t in (0.3, 1.0, 2.7):
        assert leaves.kde_log_density(leaf, [t]) == pytest.approx(leaves.kde_log_density(leaf, [-t]))


def test_kde_density_integrates_to_one():
    y = np.random.default_rng(1).normal(size=(30, 1))
    leaf = leaves.fit_kde_leaf(y, lam=0.0)
    b = leaf.bandwidth_sqrt[0, 0]
    grid = np.linspace(y.min() - 10 * b, y.max() + 10 * b, 20_001)
    density = np.exp(leaves.kde_log_density(leaf, grid[:, None]))
    assert trapezoid(density, grid) == pytest.approx(1.0, abs=1e-3)


def test_kde_log_density_batch_matches_pointwise():
    y = np.random.default_rng(2).normal(size=(12, 2))
    leaf = leaves.fit_kde_leaf(y, lam=0.1)
    queries = np.random.default_rng(3).normal(size=(5, 2))
    batch = leaves.kde_log_density(leaf, queries)
    np.testing.assert_allclose(batch, [leaves.kde_log_density(leaf, p) for p in queries])


def test_kde_log_density_rejects_wrong_dimension():
    leaf = leaves.fit_kde_leaf([[0.0], [1.0]], lam=0.0)
    with pytest.raises(DomainError):
        leaves.kde_log_density(leaf, [0.0, 1.0])


def test_majority_label_breaks_ties_at_random():
    rng = np.random.default_rng(4)
    assert leaves.majority_label(np.array([0, 5, 2]), rng) == 1
    picks = [leaves.majority_label(np.array([3, 3, 1]), rng) for _ in range(2000)]
    assert set(picks) == {0, 1}
    assert abs(np.mean(picks) - 0.5) < 3 * 0.5 / math.sqrt(2000)


def test_tiny_lambda_keeps_the_exact_normalizer():
    # B = 1e-13, below any pivot floor
    leaf = leaves.fit_kde_leaf([[0.0]], lam=1e-26)
    assert leaf.log_det_bandwidth == pytest.approx(math.log(1e-13), rel=1e-12)
    assert leaves.kde_log_density(leaf, [0.0]) == pytest.approx(
        -0.5 * math.log(2 * math.pi) - math.log(1e-13), rel=1e-12
    )
    assert not leaf.degenerate


def test_tiny_lambda_on_singular_leaf_still_integrates_to_one():
    leaf = leaves.fit_kde_leaf(np.zeros((4, 1)), lam=1e-26)
    b = leaf.bandwidth_sqrt[0, 0]
    assert b == pytest.approx(4 ** (-1 / 5) * 1e-13, rel=1e-12)
    grid = np.linspace(-10 * b, 10 * b, 20_001)
    density = np.exp(leaves.kde_log_density(leaf, grid[:, None]))
    assert trapezoid(density, grid) == pytest.approx(1.0, abs=1e-3)


def test_two_dimensional_tiny_lambda_log_det():
    leaf = leaves.fit_kde_leaf([[1.0, 2.0]], lam=1e-30)
    assert leaf.log_det_bandwidth == pytest.approx(2 * math.log(1e-15), rel=1e-12)
