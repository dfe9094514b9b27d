import math

import numpy as np
import pytest

from entroforest import entropy
from entroforest.entropy import (
    ClassHistogram,
    Estimator,
    EstimatorKind,
    JointClassSplitDistribution,
    UmvueVariant,
)
from entroforest.errors import (
    ConfigurationError,
    DomainError,
    EmptySampleError,
    InsufficientSampleError,
)


GAMMA = 0.5772156649015329
LN2 = math.log(2)

NAIVE = EstimatorKind.parse("naive")
MILLER = EstimatorKind.parse("miller")
GRASSBERGER = EstimatorKind.parse("grassberger")


def _unit_variance(n, seed=0, d=1):
    z = np.random.default_rng(seed).normal(size=(n, d))
    z -= z.mean(axis=0)
    return z / z.std(axis=0, ddof=1)


# -- estimator kinds -------------------------------------------------------


def test_estimator_kind_parse_and_modality():
    kind = EstimatorKind.parse("MVN_UMVUE")
    assert kind.tag is Estimator.MVN_UMVUE
    assert not kind.is_discrete
    assert EstimatorKind.parse("grassberger").is_discrete
    with pytest.raises(ConfigurationError):
        EstimatorKind.parse("shannon")
    with pytest.raises(ConfigurationError):
        EstimatorKind.parse("one-nn", subsample_size=1)


def test_estimator_kind_min_samples():
    assert NAIVE.min_samples(3) == 1
    assert EstimatorKind.parse("mvn-plugin").min_samples(3) == 2
    assert EstimatorKind.parse("mvn-umvue").min_samples(3) == 5
    assert EstimatorKind.parse("mvn-umvue", umvue_variant="as-printed").min_samples(3) == 4


def test_estimator_kind_dict_round_trip():
    kind = EstimatorKind.parse("one-nn", subsample_size=64)
    assert EstimatorKind.from_dict(kind.to_dict()) == kind


# -- histograms ------------------------------------------------------------


def test_histogram_pads_and_counts():
    h = ClassHistogram([3, 1], n_classes=4)
    assert h.n == 4
    assert h.n_classes == 4
    np.testing.assert_array_equal(h.counts, [3, 1, 0, 0])
    h2 = ClassHistogram.from_labels([0, 2, 2], n_classes=3)
    np.testing.assert_array_equal(h2.counts, [1, 0, 2])


def test_histogram_rejects_bad_counts():
    with pytest.raises(DomainError):
        ClassHistogram([1, -1])
    with pytest.raises(DomainError):
        ClassHistogram([1.5, 1])
    with pytest.raises(DomainError):
        ClassHistogram([1, 1, 1], n_classes=2)


# -- discrete estimators ---------------------------------------------------


@pytest.mark.parametrize(
    "counts, expected",
    [([4], 0.0), ([2, 2], LN2), ([1, 3], math.log(4) - 3 * math.log(3) / 4)],
)
def test_naive_entropy(counts, expected):
    assert entropy.naive_entropy(ClassHistogram(counts)) == pytest.approx(expected, abs=1e-10)


def test_miller_entropy():
    assert entropy.miller_entropy(ClassHistogram([4])) == pytest.approx(0.0, abs=1e-12)
    assert entropy.miller_entropy(ClassHistogram([1, 1])) == pytest.approx(LN2 + 0.25, abs=1e-10)


def test_miller_offset_is_exact():
    rng = np.random.default_rng(11)
    for _ in range(50):
        k = int(rng.integers(2, 12))
        h = ClassHistogram(rng.integers(0, 20, size=k) + 1)
        diff = entropy.miller_entropy(h) - entropy.naive_entropy(h)
        assert diff == pytest.approx((k - 1) / (2 * h.n), abs=1e-12)


def test_grassberger_g_values():
    assert entropy.grassberger_g(1) == pytest.approx(-GAMMA - LN2, abs=1e-10)
    assert entropy.grassberger_g(2) == pytest.approx(2 - GAMMA - LN2, abs=1e-10)
    assert entropy.grassberger_g(1000) == pytest.approx(math.log(1000), abs=1e-3)
    with pytest.raises(DomainError):
        entropy.grassberger_g(0)


def test_grassberger_entropy():
    # G(4) = psi(4) + (psi(5/2) - psi(2)) / 2 = 8/3 - gamma - ln 2
    assert entropy.grassberger_entropy(ClassHistogram([4])) == pytest.approx(
        3 * LN2 + GAMMA - 8 / 3, abs=1e-10
    )
    assert entropy.grassberger_entropy(ClassHistogram([1, 1])) == pytest.approx(
        2 * LN2 + GAMMA, abs=1e-10
    )
    assert entropy.grassberger_entropy(ClassHistogram([1000, 1000])) == pytest.approx(LN2, abs=1e-3)


def test_discrete_estimators_reject_empty_histogram():
    with pytest.raises(EmptySampleError):
        entropy.naive_entropy(ClassHistogram([0, 0]))
    with pytest.raises(EmptySampleError):
        entropy.grassberger_entropy(ClassHistogram([0, 0]))


@pytest.mark.slow
def test_naive_entropy_first_order_bias():
    k, n, reps = 10, 100, 20_000
    rng = np.random.default_rng(12)
    draws = rng.multinomial(n, np.full(k, 1 / k), size=reps)
    values = np.array([entropy.naive_entropy(ClassHistogram(c)) for c in draws])
    expected = math.log(k) - (k - 1) / (2 * n)
    se = values.std(ddof=1) / math.sqrt(reps)
    assert abs(values.mean() - expected) < 3 * se + 1 / (12 * n**2)


# -- differential estimators -----------------------------------------------


def test_mvn_plugin_entropy_closed_forms():
    assert entropy.mvn_plugin_entropy(_unit_variance(40)) == pytest.approx(1.4189385332, abs=1e-9)

    y = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]]) * math.sqrt(3 / 4)
    assert entropy.mvn_plugin_entropy(y) == pytest.approx(2.8378770664, abs=1e-9)


def test_mvn_plugin_entropy_correlated():
    # rows with covariance [[1, .5], [.5, 1]] under the n - 1 denominator
    base = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]]) * math.sqrt(3 / 4)
    root = np.linalg.cholesky(np.array([[1.0, 0.5], [0.5, 1.0]]))
    y = base @ root.T
    assert entropy.mvn_plugin_entropy(y) == pytest.approx(2.6940345044, abs=1e-9)
    assert entropy.mvn_diag_entropy(y) == pytest.approx(2.8378770664, abs=1e-9)


def test_mvn_diag_dominates_plugin():
    rng = np.random.default_rng(13)
    for _ in range(20):
        y = rng.normal(size=(30, 3)) @ rng.normal(size=(3, 3))
        assert entropy.mvn_diag_entropy(y) >= entropy.mvn_plugin_entropy(y) - 1e-12


def test_mvn_diag_equals_plugin_for_uncorrelated_sample():
    y = np.array([[1.0, 2.0], [-1.0, 2.0], [1.0, -2.0], [-1.0, -2.0]])
    assert entropy.mvn_diag_entropy(y) == pytest.approx(entropy.mvn_plugin_entropy(y), abs=1e-12)


def test_mvn_estimators_flag_singular_samples():
    value = entropy.mvn_plugin_entropy(np.ones((5, 2)))
    assert value.degenerate
    assert np.isfinite(value)


def test_mvn_umvue_hand_value():
    value = entropy.mvn_umvue_entropy([[-1.0], [0.0], [1.0]])
    assert value == pytest.approx(0.5 * (1 + math.log(math.pi)) + 0.5 * LN2 + GAMMA / 2, abs=1e-10)


def test_mvn_umvue_sample_minimum():
    with pytest.raises(InsufficientSampleError):
        entropy.mvn_umvue_entropy([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]])
    entropy.mvn_umvue_entropy([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]], UmvueVariant.AS_PRINTED)


@pytest.mark.slow
def test_mvn_umvue_is_unbiased_where_plugin_is_not():
    reps, n = 100_000, 10
    y = np.random.default_rng(14).normal(size=(reps, n, 1))
    umvue = np.array([entropy.mvn_umvue_entropy(s) for s in y])
    plugin = np.array([entropy.mvn_plugin_entropy(s) for s in y])
    truth = 0.5 * (1 + math.log(2 * math.pi))
    se = umvue.std(ddof=1) / math.sqrt(reps)
    assert abs(umvue.mean() - truth) < 3 * se
    assert truth - plugin.mean() > 3 * plugin.std(ddof=1) / math.sqrt(reps)


@pytest.mark.slow
def test_mvn_umvue_as_printed_for_zero_mean_data():
    reps, n = 100_000, 10
    y = np.random.default_rng(15).normal(size=(reps, n, 1))
    values = np.array([entropy.mvn_umvue_entropy(s, "as-printed") for s in y])
    se = values.std(ddof=1) / math.sqrt(reps)
    assert abs(values.mean() - 0.5 * (1 + math.log(2 * math.pi))) < 3 * se


def test_one_nn_entropy_two_points():
    assert entropy.one_nn_entropy([[0.0], [1.0]]) == pytest.approx(GAMMA + LN2, abs=1e-10)


def test_one_nn_entropy_flags_duplicates():
    value = entropy.one_nn_entropy([[0.0], [0.0], [1.0]])
    assert value.degenerate
    assert np.isfinite(value)


def test_one_nn_entropy_subsample_is_seeded():
    y = np.random.default_rng(16).normal(size=(600, 2))
    a = entropy.one_nn_entropy(y, np.random.default_rng(1), subsample_size=256)
    b = entropy.one_nn_entropy(y, np.random.default_rng(1), subsample_size=256)
    assert a == b


@pytest.mark.slow
@pytest.mark.parametrize(
    "sampler, truth",
    [
        (lambda rng: rng.uniform(size=(1000, 1)), 0.0),
        (lambda rng: rng.normal(size=(1000, 1)), 0.5 * (1 + math.log(2 * math.pi))),
    ],
)
def test_one_nn_entropy_is_close_to_closed_form(sampler, truth):
    rng = np.random.default_rng(17)
    values = [entropy.one_nn_entropy(sampler(rng), rng, subsample_size=1000) for _ in range(200)]
    assert abs(np.mean(values) - truth) < 0.03


# -- dispatch and scoring --------------------------------------------------


def test_entropy_dispatch():
    assert entropy.entropy(ClassHistogram([2, 2]), NAIVE) == pytest.approx(LN2, abs=1e-10)
    assert entropy.entropy(ClassHistogram([1, 1]), GRASSBERGER) == pytest.approx(
        1.9635100260, abs=1e-9
    )
    assert entropy.entropy(_unit_variance(25), EstimatorKind.parse("mvn-plugin")) == pytest.approx(
        1.4189385332, abs=1e-9
    )


def test_entropy_dispatch_rejects_modality_mismatch():
    with pytest.raises(ConfigurationError):
        entropy.entropy(np.zeros((3, 1)), NAIVE)
    with pytest.raises(ConfigurationError):
        entropy.entropy(ClassHistogram([1, 1]), EstimatorKind.parse("mvn-diag"))


def test_split_score_hand_values():
    assert entropy.split_score(ClassHistogram([2, 0]), ClassHistogram([0, 2]), NAIVE) == 0.0
    assert entropy.split_score(
        ClassHistogram([1, 1]), ClassHistogram([1, 1]), NAIVE
    ) == pytest.approx(-LN2, abs=1e-10)
    assert entropy.split_score(
        ClassHistogram([1, 1]), ClassHistogram([1, 1]), GRASSBERGER
    ) == pytest.approx(-1.9635100260, abs=1e-9)


def test_split_score_empty_side_contributes_zero():
    score = entropy.split_score(ClassHistogram([0, 0]), ClassHistogram([1, 3]), NAIVE)
    assert score == pytest.approx(-entropy.naive_entropy(ClassHistogram([1, 3])))
    with pytest.raises(EmptySampleError):
        entropy.split_score(ClassHistogram([0, 0]), ClassHistogram([0, 0]), NAIVE)


def test_miller_offset_is_constant_within_a_node():
    # candidate ranking itself is covered at the split-selection level
    rng = np.random.default_rng(18)
    for _ in range(1000):
        k = int(rng.integers(2, 8))
        parent = rng.integers(1, 30, size=k)
        n = parent.sum()
        for _ in range(32):
            left = rng.integers(0, parent + 1)
            right = parent - left
            if left.sum() == 0 or right.sum() == 0:
                continue
            hl, hr = ClassHistogram(left, k), ClassHistogram(right, k)
            # each non-empty child adds (K - 1) / (2 n_l), weighted by n_l / n
            offset = entropy.split_score(hl, hr, NAIVE) - entropy.split_score(hl, hr, MILLER)
            assert offset == pytest.approx((k - 1) / n, abs=1e-12)


@pytest.mark.parametrize("name", ["naive", "miller", "grassberger"])
def test_split_score_ignores_side_order_for_classes(name):
    kind = EstimatorKind.parse(name)
    rng = np.random.default_rng(19)
    for _ in range(200):
        left = ClassHistogram(rng.integers(0, 9, size=4))
        right = ClassHistogram(rng.integers(1, 9, size=4))
        assert entropy.split_score(left, right, kind) == entropy.split_score(right, left, kind)


@pytest.mark.parametrize("name", ["mvn-plugin", "mvn-diag", "mvn-umvue"])
def test_split_score_ignores_side_order_for_targets(name):
    kind = EstimatorKind.parse(name)
    rng = np.random.default_rng(20)
    left, right = rng.normal(size=(9, 2)), rng.normal(size=(14, 2))
    assert entropy.split_score(left, right, kind) == pytest.approx(
        entropy.split_score(right, left, kind), abs=1e-12
    )


def test_one_nn_entropy_translation_and_scaling():
    y = np.random.default_rng(21).normal(size=(300, 3))
    base = entropy.one_nn_entropy(y, np.random.default_rng(5), subsample_size=256)
    shifted = entropy.one_nn_entropy(y + np.array([4.0, -2.0, 0.5]), np.random.default_rng(5), subsample_size=256)
    assert shifted == pytest.approx(base, abs=1e-9)
    for c in (0.1, 2.5, 10.0):
        scaled = entropy.one_nn_entropy(c * y, np.random.default_rng(5), subsample_size=256)
        assert scaled - base == pytest.approx(3 * math.log(c), abs=1e-9)


def test_estimate_info_gain_matches_definition():
    left, right = ClassHistogram([3, 1]), ClassHistogram([1, 3])
    parent = ClassHistogram([4, 4])
    gain = entropy.estimate_info_gain(parent, left, right, NAIVE)
    expected = LN2 - entropy.naive_entropy(left)
    assert gain == pytest.approx(expected, abs=1e-12)


# -- exact information gain -----------------------------------------------


def test_exact_info_gain_independent_split_is_zero():
    joint = JointClassSplitDistribution.from_conditionals([0.2, 0.3, 0.5], [0.5, 0.5, 0.5])
    assert entropy.multinomial_info_gain_exact(joint) == pytest.approx(0.0, abs=1e-15)


def test_exact_info_gain_deterministic_split():
    joint = JointClassSplitDistribution.from_conditionals([0.5, 0.5], [1.0, 0.0])
    assert entropy.multinomial_info_gain_exact(joint) == pytest.approx(LN2, abs=1e-12)


def test_exact_info_gain_matches_double_sum():
    rng = np.random.default_rng(19)
    table = rng.uniform(size=(5, 2))
    table /= table.sum()
    joint = JointClassSplitDistribution(table)
    p_y, p_b = table.sum(axis=1), table.sum(axis=0)
    expected = sum(
        table[y, b] * math.log(table[y, b] / (p_y[y] * p_b[b])) for y in range(5) for b in range(2)
    )
    assert entropy.multinomial_info_gain_exact(joint) == pytest.approx(expected, abs=1e-12)


def test_joint_table_validation():
    with pytest.raises(DomainError):
        JointClassSplitDistribution(np.array([[0.5, 0.6], [0.0, 0.0]]))
    with pytest.raises(DomainError):
        JointClassSplitDistribution.from_conditionals([0.5, 0.5], [1.2, 0.0])
