import shutil
import time
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

_criteria: dict = {}
_started = time.monotonic()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): test backs the named acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    ok = _criteria.get(marker.args[0], True)
    if rep.failed or rep.skipped:
        ok = False
    _criteria[marker.args[0]] = ok


# Criteria that also bound the wall time of the whole run, in seconds.
SUITE_BUDGET = {"oracle equivalence": 60.0}


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    elapsed = time.monotonic() - _started
    tr.section("acceptance criteria")
    for name, ok in _criteria.items():
        over = elapsed > SUITE_BUDGET.get(name, float("inf"))
        note = "  (suite took %.1fs, budget %.0fs)" % (elapsed, SUITE_BUDGET[name]) if over else ""
        tr.write_line("%s  %s%s" % ("PASS" if ok and not over else "FAIL", name, note))
    tr.write_line("suite wall time %.1fs" % elapsed)


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.monotonic() - _started
    if any(name in _criteria and elapsed > limit for name, limit in SUITE_BUDGET.items()):
        session.exitstatus = 1


def read_fixture(*parts) -> str:
    return FIXTURES.joinpath(*parts).read_text(encoding="utf-8")


@pytest.fixture
def workspace_dir(tmp_path):
    """Fresh copy of the golden workspace sources (not yet initialized)."""
    dest = tmp_path / "ws"
    shutil.copytree(FIXTURES / "workspace", dest)
    return dest


def golden_source(*extra: str) -> str:
    """Hierarchy, signatures and the three rules, followed by ``extra``."""
    from oracles import GOLDEN_SCHEMA_FILES
    return "".join(read_fixture("golden", f) + "\n" for f in GOLDEN_SCHEMA_FILES) + "\n".join(extra)
