import pytest

from apdcoinc import lut
from apdcoinc.recovery import DetectorParams

TABLE_SEED = 3


@pytest.fixture(scope="session")
def default_table():
    """Duty-cycle table at the default grid density for the default detector."""
    return lut.build(
        DetectorParams(),
        lut.DEFAULT_V_E_VALUES,
        lut.DEFAULT_INPUT_RATES,
        events_per_cell=lut.DEFAULT_EVENTS_PER_CELL,
        seed=TABLE_SEED,
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
