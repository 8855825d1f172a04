import pytest

from bibliomap.synthetic import blocked_corpus

# criterion label -> "PASS"/"FAIL", filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict[str, str] = {}


@pytest.fixture(scope="session")
def blocked():
    """40-paper, 4-block corpus with its planted labels."""
    return blocked_corpus(seed=1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split(".")[0])):
        terminalreporter.write_line(f"{ACCEPTANCE_RESULTS[label]} {label}")
