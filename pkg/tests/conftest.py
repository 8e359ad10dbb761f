import os

os.environ.setdefault("NUMBA_NUM_THREADS", "4")

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from hypothesis import HealthCheck, settings  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def panel():
    """Default synthetic panel (20k persons, nonlinear health)."""
    from healthdyn.panel_data import SynthConfig, generate_panel

    return generate_panel(SynthConfig())


@pytest.fixture(scope="session")
def reduced_inputs():
    from healthdyn.synthetic import reduced_grid, synthetic_inputs

    return synthetic_inputs("nonlinear", grid=reduced_grid())


@pytest.fixture(scope="session")
def reduced_solution(reduced_inputs):
    from healthdyn.lifecycle import solve

    return solve(reduced_inputs)


@pytest.fixture(scope="session")
def reduced_histories(reduced_solution):
    from healthdyn.simulation import simulate_histories

    return simulate_histories(reduced_solution, 3000, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
