"""Shared fixtures: one standard pipeline run and a few small artifacts."""
import numpy as np
import pytest

from gpzkit import datagen, micronet, reports, seeds


@pytest.fixture(scope="session")
def standard_result():
    """The default end-to-end pipeline, run once per session."""
    return reports.run_pipeline(reports.PipelineConfig())


@pytest.fixture(scope="session")
def small_dataset():
    return datagen.gaussian_mixture(3, 12, 5, 0.05, seed=7)


@pytest.fixture(scope="session")
def small_model(small_dataset):
    model = micronet.init_model([5, 12, 8], 3, seed=seeds.derive_seed(7, "init"))
    result = micronet.train(model, small_dataset, micronet.TargetScheme.onehot(),
                            epochs=40, lr=0.05, batch=8,
                            seed=seeds.derive_seed(7, "train"))
    return result.model


@pytest.fixture(scope="session")
def small_acts(small_model, small_dataset):
    return micronet.extract(small_model, small_dataset)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
