import numpy as np
import pytest

from dbarkit.domains import Disk, build_mask


@pytest.fixture(scope="session")
def disk_mask_64():
    return build_mask(Disk(0j, 1.0), h=1 / 64)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260817)


class AcceptanceLog:
    """Collects one verdict line per acceptance criterion; the terminal
    summary hook prints them after the run, past output capture."""

    def __init__(self):
        self.lines = []

    def record(self, name: str, ok: bool, detail: str) -> bool:
        self.lines.append(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok


_ACCEPTANCE = AcceptanceLog()


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE.lines:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE.lines:
            terminalreporter.write_line(line)
