import pytest

ACCEPTANCE_RESULTS = []


@pytest.fixture
def criterion():
    """Record a named acceptance criterion's outcome for the terminal summary."""
    def record(name, passed, detail=""):
        ACCEPTANCE_RESULTS.append((name, passed, detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        line = f"{'PASS' if passed else 'FAIL'}  {name}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)
