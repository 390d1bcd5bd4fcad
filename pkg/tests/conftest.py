from __future__ import annotations


def pytest_terminal_summary(terminalreporter):
    """Print one line per acceptance criterion that ran."""
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
