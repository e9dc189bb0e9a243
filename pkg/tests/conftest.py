import numpy as np
import pytest

from survmidas.simulation import ScenarioSpec, horizons, simulate_dataset


@pytest.fixture(scope="session")
def small_sim():
    """Scenario-1 draw with few covariates, shared by the slower tests."""
    sim = simulate_dataset(ScenarioSpec(1, 400, k=4, seed=11))
    return sim


@pytest.fixture(scope="session")
def small_ds(small_sim):
    return small_sim.dataset


@pytest.fixture(scope="session")
def small_t(small_ds):
    return float(horizons(small_ds, (30,))[0])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


CRITERIA = []


@pytest.fixture
def criterion():
    """Record a one-line verdict for the run summary and fail on a miss."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        CRITERIA.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
