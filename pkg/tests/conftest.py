"""Shared pytest hooks: a per-criterion summary for the acceptance suite."""

import re

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if name.startswith("test_criterion_"):
        _ACCEPTANCE[name] = report.outcome


def _criterion_key(name):
    m = re.match(r"test_criterion_(\d+)", name)
    return int(m.group(1)) if m else 999


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=_criterion_key):
        outcome = _ACCEPTANCE[name]
        label = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line("criterion %-2d %-60s %s" % (_criterion_key(name), name[len("test_"):], label))
