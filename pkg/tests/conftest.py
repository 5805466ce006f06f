import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_votes(rng, n, m, sparsity=0.3):
    v = rng.dirichlet(np.ones(m), size=n)
    v = np.where(rng.random(v.shape) < sparsity, 0.0, v)
    empty = v.sum(axis=1) == 0
    v[empty, rng.integers(m, size=int(empty.sum()))] = 1.0
    return v / v.sum(axis=1, keepdims=True)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
