import numpy as np
import pytest

from rfavar.data.transforms import standardize
from rfavar.models.dgp import DgpConfig
from rfavar.simulation.dgp import simulate


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo acceptance checks (deselect with -m 'not slow')")


@pytest.fixture(scope="session")
def sparse_truth():
    """A small sparse FAVAR panel: N=60, T=200, two latent factors and one observed."""
    return simulate(DgpConfig(n_series=60, n_periods=200, r1=2, r2=1, zero_fraction=0.5, seed=11))


@pytest.fixture(scope="session")
def standardized_panel(sparse_truth):
    """(X, G) standardized the way load_panel does it."""
    X, _, _ = standardize(sparse_truth.X)
    G, _, _ = standardize(sparse_truth.G.T)
    return X, G.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
