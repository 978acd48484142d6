import numpy as np
import pytest

from centermesh import backend, make_toy_model


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # Pay any JIT compilation once, outside timed test bodies.
    backend.warmup()


@pytest.fixture(scope="session")
def toy_model():
    return make_toy_model(120, 22, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
