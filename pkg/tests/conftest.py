import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record a PASS/FAIL line for an acceptance criterion, then assert on it."""

    def _emit(label: str, ok: bool, detail: str = ""):
        line = f"{label} {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return _emit


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
