import numpy as np
import pytest

from energyrank import thermal
from energyrank.ingest import AlignedSeries


def seasonal_temps(days=365, mean=55.0, amp=25.0, noise=5.0, seed=0):
    rng = np.random.default_rng(seed)
    d = np.arange(days)
    return mean + amp * np.cos(2 * np.pi * (d - 200) / 365.25) + rng.normal(0, noise, days)


def synthetic_aligned(p, days=365, noise=0.0, seed=0, temps=None):
    """Daily series generated from the degree-day model with Gaussian noise."""
    t = seasonal_temps(days, seed=seed) if temps is None else np.asarray(temps, float)
    mu = thermal.mean_energy(t, *p[:5])
    rng = np.random.default_rng(seed + 1)
    y = mu + rng.normal(0, noise, len(t)) if noise > 0 else mu
    return AlignedSeries.from_arrays(t, y, building_id="B")


@pytest.fixture
def aligned_truth():
    return (10.0, 2.0, 3.0, 60.0, 75.0)


# --------------------------------------------------------------------------
# acceptance summary lines, printed once at the end of the run

_ACCEPTANCE = {}


def record_acceptance(number, line):
    _ACCEPTANCE[number] = line


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])
