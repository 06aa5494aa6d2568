from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from multissp.model import AllocationMatrix, StakeTable

FIXTURES = Path(__file__).parent / "fixtures"

# acceptance results, filled by tests/test_acceptance.py and echoed at the end of the run
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {text}")


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@st.composite
def allocations(draw, max_n=8, max_k=5, integral=False):
    """Feasible (stakes, allocation) pairs; rows are exact splits of each stake."""
    n = draw(st.integers(1, max_n))
    k = draw(st.integers(1, max_k))
    if integral:
        rows = [[draw(st.integers(0, 50)) for _ in range(k)] for _ in range(n)]
        for row in rows:
            if sum(row) == 0:
                row[0] = 1
        omega = np.array(rows, dtype=float)
    else:
        omega = np.array(
            [[draw(st.one_of(st.just(0.0), st.floats(1e-3, 1000))) for _ in range(k)] for _ in range(n)]
        )
        omega[omega.sum(axis=1) == 0, 0] = 1.0
    return StakeTable(omega.sum(axis=1)), AllocationMatrix(omega)


def random_allocation(rng, n, k, integral=False, zero_prob=0.0):
    if integral:
        omega = rng.integers(0, 40, size=(n, k)).astype(float)
    else:
        omega = rng.uniform(0, 100, size=(n, k))
    if zero_prob:
        omega[rng.random((n, k)) < zero_prob] = 0.0
    omega[omega.sum(axis=1) == 0, 0] = 1.0
    return StakeTable(omega.sum(axis=1)), AllocationMatrix(omega)
