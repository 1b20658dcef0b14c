import contextlib

import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """Context manager recording a PASS/FAIL line for one acceptance criterion.

    Usage: ``with criterion(3, "golden network") as info: ...; info["detail"] = "..."``
    """

    @contextlib.contextmanager
    def record(number, title):
        info = {"detail": ""}
        try:
            yield info
        except BaseException as exc:
            _RESULTS[number] = (False, title, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            raise
        _RESULTS[number] = (True, title, info["detail"])

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        ok, title, detail = _RESULTS[number]
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
