import numpy as np
import pytest

from catebench.learners import LearnerConfig

#: Tiny settings so engine-level tests stay fast; the acceptance suite uses
#: the package's desk-scale profile instead.
FAST_CONFIG = LearnerConfig(
    forest_trees=8,
    forest_max_depth=5,
    boost_rounds=10,
    lasso_n_lambdas=8,
)


@pytest.fixture
def fast_config() -> LearnerConfig:
    return FAST_CONFIG


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
