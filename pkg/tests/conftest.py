import numpy as np
import pytest

from sparsadv._backend import available_backends
from sparsadv.core import SeededRng

ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale runs (minutes)")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return SeededRng(1234, 99)


@pytest.fixture
def small_dict(rng):
    from sparsadv.synth import gen_dictionary

    return gen_dictionary(16, 32, rng.derive(0))


@pytest.fixture(params=sorted(available_backends()))
def kernels(request):
    return available_backends()[request.param]


def random_matrix(seed, m, n):
    return np.random.default_rng(seed).standard_normal((m, n))
