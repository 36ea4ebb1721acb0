import pytest

ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    """Print and remember one PASS/FAIL line per acceptance criterion."""

    def record(number, title, passed, detail):
        line = f"criterion {number:>2}  {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
