import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def brute_kron(A, B):
    """Kronecker product by explicit index arithmetic."""
    m, n = A.shape
    r, s = B.shape
    out = np.empty((m * r, n * s))
    for i in range(m):
        for j in range(n):
            for k in range(r):
                for l in range(s):
                    out[i * r + k, j * s + l] = A[i, j] * B[k, l]
    return out


def brute_rearrange(M, p, q):
    """Rearrangement written out block by block (column-major vec and block order)."""
    P, Q = M.shape
    ps, qs = P // p, Q // q
    rows = []
    for j in range(q):
        for i in range(p):
            block = M[i * ps:(i + 1) * ps, j * qs:(j + 1) * qs]
            rows.append(block.flatten(order="F"))
    return np.array(rows)


def literal_irrecoverable(W, p, q):
    """Irrecoverable entries from the two index-set conditions, by broadcasting.

    Entry ``(i, j)`` is irrecoverable when no observed ``(a, b)`` shares its
    block, or none sits at the same within-block offset.
    """
    P, Q = W.shape
    ps, qs = P // p, Q // q
    a, b = np.nonzero(W)
    i = np.arange(P)[:, None, None]
    j = np.arange(Q)[None, :, None]
    same_block = ((i // ps == a // ps) & (j // qs == b // qs)).any(axis=2)
    same_offset = (((i - a) % ps == 0) & ((j - b) % qs == 0)).any(axis=2)
    return ~(same_block & same_offset)


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion and return the verdict."""
    def record(label, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
