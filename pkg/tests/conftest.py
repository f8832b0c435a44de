import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _CRITERIA.append((marker.args[0], "PASS" if rep.passed else "FAIL", item.name, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, name, detail in _CRITERIA:
        terminalreporter.write_line(f"[{status}] criterion {label}: {name}" + (f" ({detail})" if detail else ""))


@pytest.fixture(scope="session")
def benchmark_results():
    """Baseline and LCNN-2 on the desk-scale synthetic benchmark, seeds 0..9."""
    from lcnn.benchmark import run

    t0 = time.perf_counter()
    results = run(range(10))
    return results, time.perf_counter() - t0
