import numpy as np
import pytest
from hypothesis import settings

from adlrom.config import StudyConfig
from adlrom.pipeline import Workspace
from adlrom.verify import toy_config

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy():
    """n_side=8 workspace with 10 snapshots, built in memory."""
    return Workspace(toy_config(8))


@pytest.fixture(scope="session")
def tiny():
    return Workspace(toy_config(4))


@pytest.fixture(scope="session")
def full(request):
    """The full n_side=64 benchmark, cached between sessions under .pytest_cache."""
    cache = request.config.cache.mkdir("adlrom_full")
    return Workspace(StudyConfig(), cache_dir=cache, threads=4)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion; echoed immediately and in the summary."""
    def _report(label: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
