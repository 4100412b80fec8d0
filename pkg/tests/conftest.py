import time

import numpy as np
import pytest

from pebo.example import ExampleScenario, run_batch, run_expanding, simulate_scenario

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def scenario():
    return ExampleScenario()


@pytest.fixture(scope="session")
def scenario_data(scenario):
    return simulate_scenario(scenario)


@pytest.fixture(scope="session")
def batch_run(scenario, scenario_data):
    t = time.perf_counter()
    run = run_batch(scenario, data=scenario_data)
    run.elapsed = time.perf_counter() - t
    return run


@pytest.fixture(scope="session")
def expanding_run(scenario, scenario_data):
    return run_expanding(scenario, data=scenario_data)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
