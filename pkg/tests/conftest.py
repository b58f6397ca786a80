import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record a one-line verdict per acceptance criterion, then assert it."""

    def record(criterion: int, passed: bool, detail: str = ""):
        status = "PASS" if passed else "FAIL"
        _ACCEPTANCE_LINES.append(f"[{status}] acceptance criterion {criterion}: {detail}")
        assert passed, f"acceptance criterion {criterion} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[-1])):
            terminalreporter.write_line(line)
