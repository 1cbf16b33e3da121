import logging

import numpy as np
import pytest

from fairfl.config import ScenarioConfig
from fairfl.data_synth import AgentDataset, build_scenario
from fairfl.parallel import set_thread_count
from fairfl.rng import Stream


@pytest.fixture(autouse=True)
def reset_threads():
    set_thread_count(None)
    yield
    set_thread_count(None)


@pytest.fixture
def default_cfg():
    return ScenarioConfig()


@pytest.fixture
def small_cfg():
    """Outlier scenario with fewer samples and rounds, still well separated"""
    return ScenarioConfig(samples_per_agent=300, rounds=40)


@pytest.fixture(scope="session")
def default_scenario():
    return build_scenario(ScenarioConfig())


@pytest.fixture
def make_dataset():
    """Factory for hand-written AgentDatasets"""
    def make(features, labels, mean=None, noise_std=0.0, feature_std=1.0, true_cluster=0):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels)
        labels = labels.astype(np.int64) if labels.dtype.kind in "iu" else labels.astype(np.float64)
        if mean is None:
            mean = np.zeros(features.shape[1])
        return AgentDataset(features, labels, np.asarray(mean, dtype=np.float64), noise_std, feature_std,
                            true_cluster)
    return make


@pytest.fixture
def random_regression():
    """Small random regression dataset from a seeded stream"""
    def make(seed, n=30, d=4, noise=0.1):
        rng = Stream(seed, "test_data")
        X = rng.normal((n, d))
        mean = rng.normal(d)
        y = X @ mean + rng.normal(n, scale=noise)
        return AgentDataset(X, y, mean, noise, 1.0)
    return make


@pytest.fixture
def random_classification():
    def make(seed, n=30, d=4):
        rng = Stream(seed, "test_data")
        X = rng.normal((n, d))
        mean = rng.normal(d)
        y = (rng.uniform(n) < 0.5 * (1 + np.tanh(0.5 * X @ mean))).astype(np.int64)
        return AgentDataset(X, y, mean, 0.0, 1.0)
    return make


@pytest.fixture
def capture_logs(caplog):
    """fairfl loggers do not propagate; attach caplog's handler directly"""
    attached = []

    def attach(tag):
        logger = logging.getLogger(f"fairfl.{tag}")
        logger.addHandler(caplog.handler)
        attached.append(logger)
        return caplog

    yield attach
    for logger in attached:
        logger.removeHandler(caplog.handler)
