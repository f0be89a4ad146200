import pathlib
import sys

import pytest

# make tests/oracles.py importable without packaging the test tree
sys.path.insert(0, str(pathlib.Path(__file__).parent))

from robustkf import IdealPair, ModelSpec


@pytest.fixture
def unit_model():
    """Scalar random walk with unit noise everywhere."""
    return ModelSpec(F=[[1.0]], Z=[[1.0]], Q=[[1.0]], V=[[1.0]],
                     a0=[0.0], Q0=[[1.0]])


@pytest.fixture
def scalar_pair():
    """Sigma_X = Z = V = 1: conditional mean y/2, observation variance 2."""
    return IdealPair.from_gaussian(Sigma_X=[[1.0]], Z=[[1.0]], V=[[1.0]])


@pytest.fixture
def steady_pair(unit_model):
    """The unit model's correction-step pair after the variance converges."""
    return IdealPair.from_model(unit_model, 60)
