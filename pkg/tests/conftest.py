import numpy as np
import pytest

from riskplan.world import OccupancyGrid


def make_grid(width, height, res=1.0, occupied=()):
    """Grid with the listed ``(col, row)`` cells set to 1."""
    cells = np.zeros((height, width))
    for c, r in occupied:
        cells[r, c] = 1.0
    return OccupancyGrid(width, height, res, cells)


@pytest.fixture
def free_grid():
    # 40 m x 40 m, 0.25 m cells
    return make_grid(160, 160, 0.25)


# -- acceptance criterion reporting ------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    n = props["criterion"]
    status = "PASS" if report.passed else "FAIL"
    prev = _CRITERIA.get(n)
    if prev and prev[0] == "FAIL":
        return
    _CRITERIA[n] = (status, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
