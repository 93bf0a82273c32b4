import pytest

# (criterion number, title, passed, detail) appended by tests/test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def acceptance():
    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        ACCEPTANCE_LINES.append((number, title, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_LINES):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}: {detail}")
