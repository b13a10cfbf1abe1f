import os

import hypothesis
import numpy as np
import pytest

from h2s.geometry import LabeledDataset

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=100, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))


def pytest_collection_modifyitems(config, items):
    if os.environ.get("H2S_SLOW"):
        return
    skip_slow = pytest.mark.skip(reason="set H2S_SLOW=1 to run Monte-Carlo suites")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def two_class_dataset(rng: np.random.Generator) -> LabeledDataset:
    """Two well separated 5-D Gaussian clouds of 40 points."""
    a = rng.normal(size=(40, 5))
    b = rng.normal(size=(40, 5)) + np.array([6.0, 0, 0, 0, 0])
    return LabeledDataset(("a", "b"), (a, b))


@pytest.fixture
def three_class_dataset(rng: np.random.Generator) -> LabeledDataset:
    offsets = (np.zeros(4), np.array([5.0, 0, 0, 0]), np.array([0, 5.0, 0, 0]))
    return LabeledDataset(("x", "y", "z"), tuple(rng.normal(size=(30, 4)) + o for o in offsets))
