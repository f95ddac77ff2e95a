import pytest

_CRITERIA: list = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(n, ok, detail)``."""

    def _report(number, ok, detail, soft=False):
        tag = "PASS" if ok else ("SOFT-FAIL" if soft else "FAIL")
        line = f"[{tag}] criterion {number}: {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(line)
