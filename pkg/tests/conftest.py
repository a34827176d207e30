import pytest

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(k, passed, detail)``."""

    def record(number, title, passed, detail):
        line = f"CRITERION {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
