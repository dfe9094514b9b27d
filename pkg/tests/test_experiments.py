import math

import numpy as np
import pytest
from scipy import stats

from entroforest import experiments
from entroforest import forest as ef
from entroforest.data import Dataset, Task, load_csv
from entroforest.errors import AbsoluteContinuityError, ConfigurationError
from entroforest.experiments import BiasSimConfig, Metric
from entroforest.forest import TrainConfig


def _classes(seed=0, n=150):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, size=n)
    centers = np.array([[0.0, 0.0], [2.5, 0.0], [0.0, 2.5]])
    return Dataset(centers[labels] + rng.normal(size=(n, 2)), labels, Task.CLASSIFICATION, n_classes=3)


def _regression(seed=0, n=120):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, 2))
    y = np.column_stack([2 * x[:, 0], x[:, 1] ** 2]) + 0.2 * rng.normal(size=(n, 2))
    return Dataset(x, y, Task.REGRESSION)


# -- bias simulation -----------------------------------------------------------


def test_independent_branch_has_zero_true_gain():
    cfg = BiasSimConfig(
        n_classes=3,
        class_marginal=(0.2, 0.3, 0.5),
        left_probability=(0.5, 0.5, 0.5),
        sample_sizes=(20,),
        replicates=10,
    )
    rows = experiments.simulate_bias(cfg)
    assert len(rows) == 3
    assert all(row.true_gain == pytest.approx(0.0, abs=1e-15) for row in rows)
    assert {row.estimator for row in rows} == {"naive", "miller", "grassberger"}


def test_deterministic_branch_has_full_true_gain():
    cfg = BiasSimConfig(
        n_classes=2, class_marginal=(0.5, 0.5), left_probability=(1.0, 0.0), sample_sizes=(10, 40), replicates=5
    )
    rows = experiments.simulate_bias(cfg)
    assert all(row.true_gain == pytest.approx(math.log(2)) for row in rows)


def test_invalid_tables_are_configuration_errors():
    with pytest.raises(ConfigurationError):
        BiasSimConfig(n_classes=2, class_marginal=(0.5, 0.6), left_probability=(0.5, 0.5)).joint()
    with pytest.raises(ConfigurationError):
        BiasSimConfig(n_classes=2, class_marginal=(0.5, 0.5), left_probability=(1.5, 0.5)).joint()
    with pytest.raises(ConfigurationError):
        BiasSimConfig(estimators=("mvn-plugin",))


def test_simulate_bias_is_reproducible():
    cfg = BiasSimConfig(n_classes=5, sample_sizes=(30,), replicates=20, seed=3)
    assert experiments.simulate_bias(cfg) == experiments.simulate_bias(cfg)


@pytest.mark.slow
def test_grassberger_beats_naive_on_default_table():
    rows = experiments.simulate_bias(BiasSimConfig())
    by = {(row.n, row.estimator): row for row in rows}
    naive_bias = []
    for n in experiments.DEFAULT_SAMPLE_SIZES:
        truth = by[(n, "naive")].true_gain
        assert abs(by[(n, "grassberger")].mean - truth) < abs(by[(n, "naive")].mean - truth)
        naive_bias.append(by[(n, "naive")].mean - truth)
    assert all(b > 0 for b in naive_bias)
    assert all(a > b for a, b in zip(naive_bias, naive_bias[1:]))


# -- metrics and model selection ---------------------------------------------


def test_metric_direction():
    assert Metric.ACCURACY.higher_is_better
    assert Metric.LOG_LIKELIHOOD.higher_is_better
    assert not Metric.RMSE.higher_is_better


def test_single_candidate_is_returned():
    ds = _classes()
    candidate = TrainConfig(n_trees=2)
    selection = experiments.model_select([candidate], ds, ds, Metric.ACCURACY)
    assert selection.config is candidate


def test_identical_candidates_first_wins():
    ds = _classes()
    first, second = TrainConfig(n_trees=2), TrainConfig(n_trees=2)
    assert experiments.model_select([first, second], ds, ds, Metric.ACCURACY).config is first


def test_selection_matches_exhaustive_replay():
    ds = _regression()
    train, val = ds.subset(np.arange(80)), ds.subset(np.arange(80, 120))
    candidates = [
        TrainConfig(n_trees=2, n_tests=32, min_samples_leaf=8, estimator="mvn-plugin", kde_lambda=lam)
        for lam in (1e-3, 0.1, 1.0)
    ]
    selection = experiments.model_select(candidates, train, val, Metric.LOG_LIKELIHOOD)
    replay = [experiments.mean_log_likelihood(ef.train_forest(train, c), val) for c in candidates]
    assert selection.config is candidates[int(np.argmax(replay))]
    np.testing.assert_array_equal(selection.scores, replay)


def test_model_select_needs_candidates():
    with pytest.raises(ConfigurationError):
        experiments.model_select([], _classes(), _classes(), Metric.ACCURACY)


def test_rmse_and_evaluate():
    ds = _regression()
    forest = ef.train_forest(ds, TrainConfig(n_trees=2, min_samples_leaf=8, estimator="mvn-diag"))
    preds = ef.predict_regressions(forest, ds.features)
    assert experiments.rmse(forest, ds) == pytest.approx(np.sqrt(np.mean((preds - ds.targets) ** 2)))
    assert experiments.evaluate(forest, ds, "rmse") == experiments.rmse(forest, ds)


# -- classification protocol -------------------------------------------------


def test_separable_data_is_classified_perfectly():
    rng = np.random.default_rng(1)
    labels = np.repeat([0, 1], 60)
    x = np.where(labels == 0, rng.integers(0, 3, size=120), rng.integers(10, 13, size=120))
    ds = Dataset(x[:, None].astype(float), labels, Task.CLASSIFICATION)
    report = experiments.run_classification({"separable": ds}, seed=0, n_tests=64)
    for row in report.rows:
        assert row.mean == 1.0
        assert row.std == 0.0
        assert row.replicates == 5


def test_shuffled_labels_are_near_chance():
    rng = np.random.default_rng(2)
    ds = Dataset(rng.normal(size=(400, 3)), rng.permutation(np.repeat([0, 1], 200)), Task.CLASSIFICATION)
    report = experiments.run_classification(
        {"noise": ds}, seed=1, estimators=("naive",), replicates=2, n_tests=32
    )
    assert 0.35 < report.rows[0].mean < 0.65


def test_classification_report_layout_and_reproducibility():
    datasets = {"blobs": _classes()}
    a = experiments.run_classification(datasets, grid=(1, 5), seed=4, replicates=2, n_tests=16)
    b = experiments.run_classification(datasets, grid=(1, 5), seed=4, replicates=2, n_tests=16)
    assert a.csv_rows() == b.csv_rows()
    row = a.csv_rows()[0]
    assert set(row) == {
        "dataset", "estimator", "metric", "mean", "std", "replicates", "selected_min_samples_split",
    }
    values = [r.value for r in a.replicate_results if r.estimator == row["estimator"]]
    assert row["std"] == pytest.approx(np.std(values, ddof=1))


def test_classification_rejects_regression_data():
    with pytest.raises(ConfigurationError):
        experiments.run_classification({"reg": _regression()})


@pytest.mark.slow
def test_iris_accuracy_range(iris_path):
    iris = load_csv(iris_path, ["species"], Task.CLASSIFICATION)
    report = experiments.run_classification({"iris": iris}, seed=0)
    for row in report.rows:
        assert 0.88 <= row.mean <= 0.98


# -- regression protocol -----------------------------------------------------


def test_regression_report_has_both_metrics():
    report = experiments.run_regression(
        {"synthetic": _regression()},
        lambdas=(1e-2, 1.0),
        seed=5,
        estimators=("mvn-plugin", "one-nn"),
        selection_replicates=2,
        final_replicates=2,
        n_trees=2,
        n_tests=16,
        min_samples_leaf=8,
    )
    metrics = [(row.estimator, row.metric) for row in report.rows]
    assert metrics == [
        ("mvn-plugin", "log-likelihood"),
        ("mvn-plugin", "rmse"),
        ("one-nn", "log-likelihood"),
        ("one-nn", "rmse"),
    ]
    assert all(row.selected["lambda"] in (1e-2, 1.0) for row in report.rows)
    assert report.to_dict()["runtime_s"] >= 0


def test_regression_rejects_constant_quantized_targets():
    x = np.random.default_rng(6).normal(size=(20, 1))
    ds = Dataset(x, np.full((20, 1), 2.0), Task.REGRESSION)
    with pytest.raises(AbsoluteContinuityError):
        experiments.run_regression({"flat": ds}, selection_replicates=1, final_replicates=1)


def test_default_lambda_grid():
    assert experiments.DEFAULT_LAMBDAS == (1e-4, 1e-3, 1e-2, 0.1, 1.0)


@pytest.mark.slow
def test_kde_forest_recovers_generating_density():
    rng = np.random.default_rng(7)
    n = 5000
    component = rng.integers(0, 2, size=n)
    x = (component + 0.05 * rng.normal(size=n))[:, None]
    y = np.where(component == 0, -2.0, 2.0) + rng.normal(size=n)
    ds = Dataset(x, y, Task.REGRESSION)
    train, test = ds.subset(np.arange(3000)), ds.subset(np.arange(3000, n))
    forest = ef.train_forest(
        train, TrainConfig(n_trees=2, n_tests=16, min_samples_leaf=500, estimator="mvn-plugin")
    )
    ll = experiments.mean_log_likelihood(forest, test)
    means = np.where(component[3000:] == 0, -2.0, 2.0)
    truth = float(np.mean(stats.norm.logpdf(y[3000:], loc=means)))
    assert abs(ll - truth) < 0.1
