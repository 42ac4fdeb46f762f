from __future__ import annotations

import pytest

from snapsim.engine import default_config
from snapsim.report import cmd_analyze, cmd_simulate


def _bundle(path, **overrides):
    cmd_simulate(default_config(**overrides), path)
    summary = cmd_analyze(path)
    return path, summary


@pytest.fixture(scope="session")
def default_bundle(tmp_path_factory):
    """Default experiment (seed 42), simulated and analyzed once per session."""
    return _bundle(tmp_path_factory.mktemp("default"))


@pytest.fixture(scope="session")
def reseeded_bundle(tmp_path_factory):
    return _bundle(tmp_path_factory.mktemp("seed43"), seed=43)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture()
def record_criterion():
    def record(criterion, name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {name}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE_LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
