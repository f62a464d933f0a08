import pytest

from cda_crnn.numeric import make_rng

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[str, tuple[str, str]] = {}


@pytest.fixture
def rng():
    return make_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{status:<4} criterion {key}: {detail}")
