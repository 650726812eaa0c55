import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def emit(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
