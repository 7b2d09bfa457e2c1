import pytest

_LINES = []


@pytest.fixture
def criterion():
    """``criterion(number, ok, detail)`` records one acceptance line."""

    def record(number, ok, detail):
        _LINES.append((number, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}")
