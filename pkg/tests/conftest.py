from contextlib import contextmanager

import pytest

ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def gate(request):
    """Record one pass/fail line for an acceptance criterion.

    Usage: ``with gate(3, "identity check") as note: ...; note("max 1e-15")``.
    The line is printed immediately and again in the terminal summary.
    """
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    @contextmanager
    def record(number, title):
        details = []
        status = "FAIL"
        try:
            yield details.append
            status = "PASS"
        finally:
            line = f"criterion {number:>2} {status}: {title}" + (f" ({'; '.join(details)})" if details else "")
            lines.append((number, line))
            print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
