import numpy as np
import pytest
from hypothesis import settings

from distdiff import ddf, models

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def flat128():
    return models.flat_torus(128)


@pytest.fixture(scope="session")
def disc128():
    return models.disc_torus(128)


@pytest.fixture(scope="session")
def conformal128():
    return models.conformal_torus(128)


@pytest.fixture(scope="session")
def disc_dataset(disc128):
    """Instrumented disc-in-torus dataset: K=16, 300 stratified samples."""
    fs = ddf.sample_F_points(disc128, 16, seed=2)
    X = ddf.stratified_hidden_points(disc128, 300, seed=3)
    return ddf.generate_dataset(disc128, X, fs, seed=4, jobs=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE_LINES, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
