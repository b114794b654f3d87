import math

import numpy as np
import pytest

import amgc


def make_stats(class_id, mean, cov):
    return amgc.ClassStats(class_id, 10, np.asarray(mean, float), np.asarray(cov, float))


def test_version():
    assert amgc.__version__


def test_variance_enlarge():
    stats = make_stats(0, [0.0, 0.0], [[1.0, 0.5], [0.5, 2.0]])
    out = amgc.variance_enlarge(stats, 0.4)
    assert out.covariance[0, 0] == pytest.approx(1.4)
    assert out.covariance[1, 1] == pytest.approx(2.8)
    assert out.covariance[0, 1] == 0.5


def test_streaming_stats_match_numpy():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(3, 40))
    acc = amgc.StatsAccumulator(0, 3)
    acc.update(data[:, :17])
    acc.update(data[:, 17:])
    stats = amgc.finalize(acc, 0.0)
    assert np.allclose(stats.mean, data.mean(axis=1))
    assert np.allclose(stats.covariance, np.cov(data), atol=1e-10)


def test_db_loss_worked_example():
    params = amgc.ClassifierParams(np.array([[1.0, -1.0]]), np.zeros(2), 0, 2)
    stats = {
        0: amgc.ClassDistribution(make_stats(0, [1.0], [[0.0]])),
        1: amgc.ClassDistribution(make_stats(1, [-1.0], [[0.0]])),
    }
    scope = amgc.LossScope([0, 1], [0, 1])
    result = amgc.db_loss(stats, params, scope)
    assert result.value == pytest.approx(math.log(1.0 + math.exp(-2.0)), rel=1e-12)


def test_margin_identity_random_instance():
    rng = np.random.default_rng(1)
    d, k_old, k = 5, 3, 6
    weights = rng.normal(size=(d, k)) / math.sqrt(d)
    params = amgc.ClassifierParams(weights, rng.normal(size=k) * 0.3, k_old, k - k_old)
    old_stats = {}
    for c in range(k_old):
        b = rng.normal(size=(d, d))
        old_stats[c] = amgc.ClassDistribution(
            make_stats(c, rng.normal(size=d), b @ b.T / d + 0.1 * np.eye(d))
        )
    direct = amgc.amarx_loss(old_stats, params, 0.7).value
    decomposed = amgc.margin_form_loss(old_stats, params, 0.7)
    assert abs(direct - decomposed) / max(1.0, abs(direct)) <= 1e-9


def test_dataset_roundtrip(tmp_path):
    config = amgc.SynthConfig()
    config.num_classes = 3
    config.dim = 4
    config.train_per_class = 6
    config.test_per_class = 3
    dataset = amgc.gen_synthetic(config, 9)
    path = str(tmp_path / "data.efcf")
    amgc.write_feature_file(dataset, path)
    back = amgc.read_feature_file(path)
    assert back.num_classes == 3
    assert back.dim == 4
    assert np.array_equal(back.features_of(0, amgc.Split.Train),
                          dataset.features_of(0, amgc.Split.Train))


def test_metrics():
    la, aia = amgc.compute_metrics([80.0, 70.0, 60.0])
    assert la == 60.0
    assert aia == 70.0


def test_tiny_scenario_runs():
    config = amgc.SynthConfig()
    config.num_classes = 4
    config.dim = 4
    config.train_per_class = 20
    config.test_per_class = 10
    config.drift = 0.1
    config.classes_per_task = 2
    dataset = amgc.gen_synthetic(config, 3)

    scenario = amgc.ScenarioConfig()
    scenario.tasks = 2
    scenario.classes_per_task = 2
    scenario.dim = 4
    scenario.optimizer.epochs_initial = 10
    scenario.optimizer.epochs_incremental = 10
    scenario.optimizer.steps_per_epoch = 5
    report = amgc.run_scenario(scenario, dataset)
    assert len(report.seen_accuracy) == 2
    assert report.la == report.seen_accuracy[-1]
    assert 0.0 <= report.aia <= 100.0
    assert "accuracy_matrix" in report.to_json()

    single = amgc.ScenarioConfig()
    single.tasks = 1
    single.classes_per_task = 4
    single.dim = 4
    single.optimizer.epochs_initial = 5
    single.optimizer.steps_per_epoch = 5
    one = amgc.run_scenario(single, dataset)
    assert one.la == one.aia
