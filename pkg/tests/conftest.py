import numpy as np
import pytest

from tdcompsep.operators import assemble_preconditioner, build_rhs
from tdcompsep.simulator import SimulationConfig, simulate


def small_config(rows=4, cols=4, **kw):
    kw.setdefault("block_length", rows * cols)
    kw.setdefault("sweeps_per_subset", 1)
    return SimulationConfig(patch_rows=rows, patch_cols=cols, **kw)


@pytest.fixture(scope="session")
def tiny_archive():
    return simulate(small_config(4, 4))


@pytest.fixture(scope="session")
def small_archive():
    return simulate(small_config(8, 8, sweeps_per_subset=2))


@pytest.fixture
def tiny_system(tiny_archive):
    op = tiny_archive.base_operator()
    return op, assemble_preconditioner(op), build_rhs(op)


@pytest.fixture
def small_system(small_archive):
    op = small_archive.base_operator()
    return op, assemble_preconditioner(op), build_rhs(op)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number])
