import pytest

# criterion number -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def report():
    def record(criterion: int, passed: bool, detail: str):
        ACCEPTANCE[criterion] = (passed, detail)
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'} {detail}")
