import numpy as np
import pytest

from stochhyp import Grid1D, ScalarField, burgers_flux, evolve_conservation_law


def riemann_field(grid, vL, vR, x0=0.0):
    return ScalarField.from_function(grid, lambda x: np.where(x < x0, float(vL), float(vR)))


@pytest.fixture(scope="session")
def shock_run():
    grid = Grid1D(-2.0, 4.0, 400)
    return evolve_conservation_law(riemann_field(grid, 1, 0), burgers_flux(), 1.0)


# {{{ acceptance summary: one line per criterion

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and not report.failed):
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number}: {status}  {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))

# }}}
