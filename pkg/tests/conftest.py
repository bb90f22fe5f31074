import time

import numpy as np
import pytest

from cbmfs.embedding_store import SyntheticSpec, build_base_matrix, generate_synthetic

SUITE_BUDGET_SECONDS = 120.0
ACCEPTANCE_LINES = []
_session_start = [0.0]


def pytest_sessionstart(session):
    _session_start[0] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    elapsed = time.perf_counter() - _session_start[0]
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    verdict = "PASS" if elapsed < SUITE_BUDGET_SECONDS else "FAIL"
    terminalreporter.write_line(f"[{verdict}] full suite runtime: {elapsed:.1f}s (< {SUITE_BUDGET_SECONDS:.0f}s)")


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _session_start[0]
    if ACCEPTANCE_LINES and elapsed >= SUITE_BUDGET_SECONDS and exitstatus == 0:
        session.exitstatus = 1


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synthetic():
    spec = SyntheticSpec(dim=16, n_base=12, n_novel=8, samples_per_class=24, noise_scale=0.4)
    base, novel = generate_synthetic(spec, 3)
    return base, novel, build_base_matrix(base)
