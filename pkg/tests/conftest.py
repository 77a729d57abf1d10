import numpy as np
import pytest

from irsbeam.sounding import random_codebook, sensing_matrix


def make_sensing(rng, N=16, n_rx=16, n_tx=16, reflect=False):
    side = "reflect" if reflect else "transmit"
    tx = random_codebook(n_tx, N, side, rng).vectors
    rx = random_codebook(n_rx, N, "receive", rng).vectors
    return sensing_matrix(tx, rx)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full-scale end-to-end criteria (slow)")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
