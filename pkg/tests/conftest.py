import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from plap.geometry import Ball, Box, Interval, build_grid

settings.register_profile("plap", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("plap")


@pytest.fixture(scope="session")
def unit_interval():
    return build_grid(Interval(0.0, 1.0), 1 / 64, Box((-0.5,), (1.5,)))


@pytest.fixture(scope="session")
def small_disc():
    return build_grid(Ball((0.0, 0.0), 1.0), 1 / 8, Box.centered(2.5))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ------------------------------------------------------------ acceptance summary

_criteria: dict[int, list] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    n, title = crit
    entry = _criteria.setdefault(n, [title, True, ""])
    if not report.passed:
        entry[1] = False
        entry[2] = report.longrepr.reprcrash.message.splitlines()[0] if hasattr(report.longrepr, "reprcrash") else ""


@pytest.fixture(autouse=True)
def _criterion_property(request):
    m = request.node.get_closest_marker("criterion")
    if m is not None:
        request.node.user_properties.append(("criterion", tuple(m.args)))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        title, ok, why = _criteria[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}"
        tr.write_line(line + ("" if ok else f"  ({why})"))
