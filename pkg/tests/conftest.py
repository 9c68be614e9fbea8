import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from emergelab import _kernels  # noqa: E402


@pytest.fixture(params=sorted(_kernels.BACKENDS))
def kernels(request):
    """Each available kernel backend in turn."""
    return _kernels.BACKENDS[request.param]


_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    num, title = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        # a parametrised criterion passes only if every case does
        previous = _CRITERIA.get(num, (title, "PASS"))[1]
        verdict = "PASS" if report.passed and previous == "PASS" else "FAIL"
        _CRITERIA[num] = (title, verdict)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("criterion")
    if m is not None:
        outcome.get_result().criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, verdict = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:>2} {verdict}: {title}")
