import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pocsrecon.signal_space import GridSpec

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def spec41():
    return GridSpec(41, 16)


@pytest.fixture
def spec11():
    return GridSpec(11, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fourier_eval(x_values, spec, t, order=0):
    """Independent Fourier-series evaluation using an explicit DFT sum (no rfft)."""
    L = spec.grid_len
    T = spec.period_T
    n = spec.n_harmonics
    m = np.arange(-n, n + 1)
    grid = np.arange(L) / spec.rate_R
    coef = np.exp(-2j * np.pi * np.outer(m, grid) / T) @ x_values / L
    w = 2j * np.pi * m / T
    t = np.atleast_1d(t)
    return np.real(np.exp(np.outer(t, w)) @ (coef * w ** order))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
