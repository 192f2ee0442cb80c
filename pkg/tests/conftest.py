import pytest

_LINES: list[str] = []


@pytest.fixture
def record():
    """Collect a one-line PASS/FAIL verdict for the terminal summary."""
    def _record(label: str, passed: bool, detail: str) -> bool:
        _LINES.append(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
