import numpy as np
import pytest


def random_dims(rng, max_m=30):
    """``(m, n, p)`` with ``m < n``, ``p <= n`` and ``m + p >= n``."""
    m = int(rng.integers(1, max_m + 1))
    n = int(rng.integers(m + 1, m + 16))
    p = int(rng.integers(n - m, n + 1))
    return m, n, p


def random_pair(rng, m, n, p):
    return rng.standard_normal((m, n)), rng.standard_normal((p, n))


def rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
