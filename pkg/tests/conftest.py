import numpy as np
import pytest

from jlssabs import case_study as cs
from jlssabs.abstraction import build_abstraction

# Decay rates used for the benchmark: 3 is infeasible for the triple integrators.
KAPPA = {"1": 3.0, "2": 3.0, "3": 2.5, "4": 2.5}
BHAT = {"1": "identity", "2": "identity", "3": "behavior", "4": "behavior"}


def benchmark_abstractions(d=0.5):
    net = cs.build_network(d)
    Ps = cs.projections()
    return net, {sid: build_abstraction(net[sid].sys, Ps[sid], KAPPA[sid], pi=1.0,
                                        bhat_mode=BHAT[sid])
                 for sid in net.ids}


@pytest.fixture(scope="session")
def benchmark():
    return benchmark_abstractions(0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, printed after the run.
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: s.split()[2]):
        terminalreporter.write_line(line)
