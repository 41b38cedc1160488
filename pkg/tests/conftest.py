import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "lifereg",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("lifereg")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_field(rng, shape, amp=1.5, sigma=3.0):
    from lifereg.grid import blur_field

    f = blur_field(rng.standard_normal((*shape, 2)), sigma)
    return amp * f / np.abs(f).max()


# acceptance verdicts, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
