import pytest

_acceptance_lines: list[str] = []


class _CriterionRecorder:
    """Context manager: records PASS when the block runs clean, FAIL otherwise."""

    def __init__(self, number: int, name: str):
        self.number = number
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        _acceptance_lines.append(f"criterion {self.number} ({self.name}): {verdict}")
        return False


@pytest.fixture
def criterion():
    return _CriterionRecorder


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria")
    for line in sorted(_acceptance_lines):
        terminalreporter.write_line(line)
