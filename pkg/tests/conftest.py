import time
from contextlib import contextmanager

import pytest

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def criterion(request):
    """Context manager recording one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash[_LINES_KEY]

    @contextmanager
    def run(number: int, title: str):
        start = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            took = time.perf_counter() - start
            reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            lines.append((number, f"criterion {number:2d} FAIL  {title} ({took:.1f}s): {reason}"))
            print(lines[-1][1])
            raise
        took = time.perf_counter() - start
        lines.append((number, f"criterion {number:2d} PASS  {title} ({took:.1f}s)"))
        print(lines[-1][1])

    return run


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
