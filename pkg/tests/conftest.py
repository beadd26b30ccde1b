import os
import sys

import pytest

from transit_eta.synth import SynthSpec, generate

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "fixtures")


@pytest.fixture(scope="session")
def small_city():
    """Noiseless three-line city over two days, shared by read-only tests."""
    return generate(SynthSpec(seed=11, days=("2021-03-11", "2021-03-18"), noise_sigma=0.0))


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def cli_env(monkeypatch):
    """Run CLI subprocesses against this checkout."""
    src = os.path.join(ROOT, "src")
    monkeypatch.setenv("PYTHONPATH", src + os.pathsep + os.environ.get("PYTHONPATH", ""))
    return [sys.executable, "-m", "transit_eta"]


# --- acceptance summary -----------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    failed = report.failed or (report.when == "setup" and report.skipped)
    if report.when == "call" or failed:
        previous = _CRITERIA.get(number, (title, "PASS"))[1]
        _CRITERIA[number] = (title, "FAIL" if failed or previous == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}")
