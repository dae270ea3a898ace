import pytest

_LINES: list[str] = []


@pytest.fixture
def accept():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(name: str, ok: bool | None, detail: str = "") -> bool | None:
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        _LINES.append(f"{status}  {name}" + (f"  ({detail})" if detail else ""))
        print(_LINES[-1])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
