import pytest

_RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict: ``criterion(number, ok, detail)``; returns ``ok``."""

    def record(number, ok, detail):
        verdict = "PASS" if ok else "FAIL"
        _RESULTS.append(f"criterion {number:>2}: {verdict}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_RESULTS):
            terminalreporter.write_line(line)
