import numpy as np
import pytest

# acceptance outcomes, echoed in the terminal summary
VERDICTS: list[str] = []


def verdict(number: int, title: str, ok: bool, detail: str = "") -> None:
    """Record and print one pass/fail line, then assert it."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
    if detail:
        line += f"  [{detail}]"
    VERDICTS.append(line)
    print(line, flush=True)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
