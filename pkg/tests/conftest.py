import numpy as np
import pytest

from trailcast.evaluation.synthetic import SyntheticRaceSpec, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_race():
    """Three editions, 60 runners, 6 checkpoints, with some dropout."""
    spec = SyntheticRaceSpec(n_runners=60, n_checkpoints=6, fatigue=0.1, slowness=0.3,
                             slowdown=60.0, noise_scale=0.06, effort_power=2.0, seed=7)
    return generate_synthetic(spec)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines recorded by test_acceptance.py."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            lines += [v for k, v in getattr(rep, "user_properties", []) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
