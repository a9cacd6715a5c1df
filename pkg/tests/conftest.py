import pytest

_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdicts():
    """Collector for one-line acceptance verdicts, printed at the end of the run."""
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
