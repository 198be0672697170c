import re

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion_log():
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number, passed, detail):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        line = f"criterion {str(number):<7} {status:<4}  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")

    def key(item):
        m = re.match(r"(\d+)(.*)", str(item[0]))
        return int(m.group(1)), m.group(2)

    for _, line in sorted(ACCEPTANCE_LINES, key=key):
        terminalreporter.write_line(line)
