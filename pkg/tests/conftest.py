import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture(scope="session")
def shared_motion_means():
    from gated_insight.experiments import CohortSpec

    return CohortSpec().resolved_hyperparameters().motion_means


@pytest.fixture(scope="session")
def small_cohort():
    """A 12-agent default cohort (with its control and trajectory)."""
    from gated_insight.experiments import CohortSpec, run_cohort

    return run_cohort(CohortSpec(n_agents=12, master_seed=3))


@pytest.fixture(scope="session")
def default_cohort():
    """``default_cohort(seed)``: the default 99-agent cohort, run once per seed."""
    from gated_insight.experiments import CohortSpec, run_cohort

    cache = {}

    def get(seed):
        if seed not in cache:
            cache[seed] = run_cohort(CohortSpec(master_seed=seed))
        return cache[seed]

    return get
