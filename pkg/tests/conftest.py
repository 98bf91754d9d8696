import numpy as np
import pytest

from imexflow.assembly import Assembler
from imexflow.fe import build_dof_layout
from imexflow.mesh import build_unit_square


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def square4():
    layout = build_dof_layout(build_unit_square(4, 4), ["all"])
    return layout, Assembler(layout)


@pytest.fixture(scope="session")
def square2():
    layout = build_dof_layout(build_unit_square(2, 2), ["all"])
    return layout, Assembler(layout)


_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    num, title = mark.args
    entry = _criteria.setdefault(num, {"title": title, "ok": True, "details": []})
    if rep.failed:
        entry["ok"] = False
    if rep.when == "call":
        entry["details"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        e = _criteria[num]
        line = f"criterion {num} {'PASS' if e['ok'] else 'FAIL'}: {e['title']}"
        if e["details"]:
            line += " | " + "; ".join(e["details"])
        terminalreporter.write_line(line)
