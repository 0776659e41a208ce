import pytest

# criterion key -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict = {}
CRITERIA = ("1", "2", "3", "4", "5", "6", "7", "budget")


@pytest.fixture
def record_acceptance():
    def record(key, passed, detail):
        ACCEPTANCE[key] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in CRITERIA:
        passed, detail = ACCEPTANCE.get(key, (False, "not evaluated"))
        terminalreporter.write_line(f"ACCEPTANCE {key} {'PASS' if passed else 'FAIL'}: {detail}")
