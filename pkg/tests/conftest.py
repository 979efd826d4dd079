import numpy as np
import pytest

from eegworkload.core import paradigm_timeline
from eegworkload.synthgen import SynthConfig, generate_session


def short_timeline(n=1, sample_rate=1000.0):
    """``n`` trials per level: same phase structure as the paradigm, a fraction of the length."""
    return paradigm_timeline(sample_rate, trials={1: n, 2: n, 3: n})


@pytest.fixture(scope="session")
def short_session():
    return generate_session(SynthConfig(seed=7), 0, short_timeline(1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict for asserting."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number: int, ok: bool, detail: str) -> bool:
        lines[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(lines[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
