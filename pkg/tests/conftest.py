import numpy as np
import pytest

from fqrsub import SimulationConfig, compute_scores, make_basis, simulate


@pytest.fixture(scope="session")
def sim_small():
    """n=2000 training curves with Normal errors, plus 200 test curves."""
    train, test = simulate(SimulationConfig(n=2000, m_test=200, seed=11))
    return train, test


@pytest.fixture(scope="session")
def design_small(sim_small):
    basis = make_basis(7, 3)
    return compute_scores(sim_small[0], basis)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """``report(num, title, ok, detail)`` prints and records one criterion line."""
    def report(num, title, ok, detail):
        line = f"criterion {num:>2}  {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        print(line)
        _ACCEPTANCE[num] = line
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[num])
