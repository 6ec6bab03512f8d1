"""Shared fixtures: one small synthetic pipeline built once per session.

The small preset (16 encoded / 24 not encoded) is large enough for the
classifier to separate the classes yet cheap enough that the whole unit
suite stays interactive. Anything paper-scale lives in test_acceptance.
"""

import numpy as np
import pytest

from motionblend import blending, classifier, dataset, online


@pytest.fixture(scope="session")
def small_cfg():
    return dataset.PRESETS["small"]


@pytest.fixture(scope="session")
def small_samples(small_cfg):
    return dataset.generate_synthetic(small_cfg)


@pytest.fixture(scope="session")
def small_part(small_samples):
    return dataset.partition(small_samples, 1)


@pytest.fixture(scope="session")
def small_model(small_part):
    # No held-out split here: unit tests need a confident model over the
    # whole partition, not an unbiased accuracy estimate.
    cfg = classifier.TrainConfig(epochs=150, seed=0)
    model, _ = classifier.train(small_part, cfg)
    return model


@pytest.fixture(scope="session")
def small_grid():
    return blending.BlendGrid.uniform(11)


@pytest.fixture(scope="session")
def small_table(small_part, small_grid, small_model):
    return blending.compute_table(small_part, small_grid, small_model)


@pytest.fixture(scope="session")
def schedule():
    return online.OnlineSchedule()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
