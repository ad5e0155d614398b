"""Shared pytest hooks: acceptance criteria report one line each at the end of the run."""

CRITERIA = {}


def record(number, passed, detail):
    """Remember the outcome of an acceptance criterion (printed in the terminal summary)."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA.setdefault(number, []).append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        for line in CRITERIA[number]:
            terminalreporter.write_line(line)
