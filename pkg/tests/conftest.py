import numpy as np
import pytest

ACCEPTANCE_LINES = []


def random_psd(rng, m, rank=None):
    B = rng.standard_normal((m, rank or m))
    return B @ B.T


def two_clouds(seed=0, per=5, gap=10.0):
    """Two well-separated 2-D point clouds and their labels."""
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 0.3, (per, 2)) + [gap, 0.0]
    b = rng.normal(0.0, 0.3, (per, 2)) + [0.0, gap]
    return np.vstack([a, b]), np.repeat([0, 1], per)


def same_partition(a, b):
    """True when two labelings agree up to renaming of cluster ids."""
    a, b = np.asarray(a), np.asarray(b)
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
