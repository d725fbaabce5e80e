import pytest

_LINES = []


@pytest.fixture(scope="session")
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion; the lines are printed at the end of the run."""

    def record(name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        _LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
