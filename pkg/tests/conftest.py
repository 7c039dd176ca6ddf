from __future__ import annotations

import re
import shutil
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def hello_bundle() -> Path:
    return FIXTURES / "hello_world"


@pytest.fixture
def multi_bundle() -> Path:
    return FIXTURES / "multi"


@pytest.fixture
def metaffi_view() -> Path:
    return FIXTURES / "metaffi" / "view.json"


@pytest.fixture
def cmake_available() -> bool:
    if not (shutil.which("cmake") and shutil.which("ninja")):
        pytest.skip("cmake/ninja not installed; configure-mode tests need a toolchain")
    return True


# acceptance summary: one line per criterion ----------------------------------

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_results: dict[int, list[tuple[str, str]]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        reason = ""
        if report.skipped and isinstance(report.longrepr, tuple):
            reason = report.longrepr[2].removeprefix("Skipped: ")
        _results.setdefault(int(m.group(1)), []).append((report.outcome, reason))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        outcomes = _results[number]
        if any(o == "failed" for o, _ in outcomes):
            line = "FAIL"
        elif all(o == "skipped" for o, _ in outcomes):
            line = "SKIP (" + "; ".join(r for _, r in outcomes if r) + ")"
        else:
            line = "PASS"
        terminalreporter.write_line(f"criterion {number}: {line}")
