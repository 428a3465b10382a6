import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n = mark.args[0]
    if rep.failed:
        status = "FAIL"
    elif rep.skipped:
        status = "SKIP"
    elif rep.when == "call":
        status = "PASS"
    else:
        return
    prev_status, details = _RESULTS.get(n, ("PASS", []))
    rank = {"PASS": 0, "SKIP": 1, "FAIL": 2}
    details = details + [f"{k}={v}" for k, v in item.user_properties if f"{k}={v}" not in details]
    _RESULTS[n] = (max(prev_status, status, key=rank.get), details)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status, details = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {status}" + (f"  ({'; '.join(details)})" if details else ""))
