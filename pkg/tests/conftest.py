"""Shared pytest plumbing: collects the acceptance verdict lines and
prints them as a terminal summary block so each criterion reports one
PASS/FAIL line regardless of output capturing."""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
