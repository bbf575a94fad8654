import numpy as np
import pytest

from cdcnn.dataset import generate_synthetic


@pytest.fixture(scope="session")
def small_synth():
    # 4 subjects x 4 classes x 10 windows
    return generate_synthetic(4, 10, seed=3)


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
