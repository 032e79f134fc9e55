import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome: criterion(name, ok, detail)."""
    def record(name, ok, detail=""):
        _CRITERIA.append((name, bool(ok), detail))
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
