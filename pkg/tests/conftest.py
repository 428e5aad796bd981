import pytest

# one line per acceptance criterion, echoed in the terminal summary
CRITERIA_LINES = []


@pytest.fixture
def verdict():
    """Record and print ``CRITERION n: PASS|FAIL  details``; returns ``ok`` for asserting."""
    def record(number, ok, details):
        line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {details}"
        CRITERIA_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
