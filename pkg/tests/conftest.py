import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the run summary, then assert."""

    def record(tag: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} {tag}: {detail}"
        _LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
