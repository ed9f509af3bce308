import numpy as np
import pytest

from disordered_rhf.disorder import DisorderParams

# the disordered benchmark law: charges 1 or 2 with equal probability
BENCH = DisorderParams(dimension=1, charges=((1.0, 0.5), (2.0, 0.5)), r_disp=0.1, half_width=0.2)


@pytest.fixture
def bench_params():
    return BENCH


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs longer than a few seconds")


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
