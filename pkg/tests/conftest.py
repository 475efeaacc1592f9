import pytest

_verdicts: list[str] = []


@pytest.fixture
def verdict():
    """Record a one-line PASS/FAIL verdict; every line is echoed in the summary."""

    def record(name: str, passed: bool | None, detail: str = ""):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        line = f"{name}: {status}" + (f"  ({detail})" if detail else "")
        _verdicts.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in _verdicts:
            terminalreporter.write_line(line)
