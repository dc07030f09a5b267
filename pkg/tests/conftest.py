import os

import pytest

from nci_lab import acceptance

_results: dict[int, acceptance.CriterionResult] = {}


@pytest.fixture(scope="session")
def acceptance_results(tmp_path_factory):
    """The full suite runs once per session (about five minutes single-process)."""
    if not _results:
        jobs = int(os.environ.get("NCI_LAB_JOBS", min(4, os.cpu_count() or 1)))
        out = tmp_path_factory.mktemp("acceptance")
        for r in acceptance.selftest(out, jobs=jobs):
            _results[r.number] = r
    return _results


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        terminalreporter.write_line(_results[n].line())
