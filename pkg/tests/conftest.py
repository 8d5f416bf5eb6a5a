import pytest

# (criterion, passed, detail) collected by the acceptance module
ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; returns the verdict so tests can assert it."""
    def record(name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
