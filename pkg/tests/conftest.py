import time

import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_call(item):
    start = time.perf_counter()
    yield
    item.user_properties.append(("elapsed", time.perf_counter() - start))


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None or report.when != "call" and not report.failed:
        return
    number, title = marker
    entry = _results.setdefault(number, {"title": title, "ok": True, "elapsed": 0.0})
    entry["ok"] = entry["ok"] and not report.failed
    entry["elapsed"] += dict(report.user_properties).get("elapsed", 0.0) if report.when == "call" else 0.0


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        verdict = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {number} [{verdict}] {entry['title']} ({entry['elapsed']:.1f} s)")
