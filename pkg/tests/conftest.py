import math
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"


def within_sigma(successes: int, n: int, p: float, k: float = 3.0) -> bool:
    """Binomial check: observed count within k standard errors of n*p.

    Carries the usual half-count continuity correction, which matters when
    n*p*(1-p) is tiny and a single stray outcome exceeds the raw band.
    """
    if p in (0.0, 1.0):
        return successes == round(p * n)
    return abs(successes - n * p) <= k * math.sqrt(n * p * (1 - p)) + 0.5


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir():
    return DATA


_CRITERIA: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _CRITERIA[marker] = "PASS" if report.passed else "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict in _CRITERIA.items():
        terminalreporter.write_line(f"{verdict}  {name}")
