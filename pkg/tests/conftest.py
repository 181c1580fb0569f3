import datetime as dt

import numpy as np
import pytest

from amdcast.ingest import PARAMETERS, TimeSeriesFrame


def make_frame(values, start=dt.date(2021, 2, 9), step_days=1, columns=PARAMETERS):
    values = np.asarray(values, dtype=np.float64)
    dates = tuple(start + dt.timedelta(days=step_days * k) for k in range(values.shape[0]))
    return TimeSeriesFrame(dates, values, tuple(columns))


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
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
