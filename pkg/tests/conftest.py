import numpy as np
import pytest

# one-year matrix used throughout as a realistic fixture
TABLE1 = np.array(
    [
        [0.9395, 0.0566, 0.0037, 2.7804e-04],
        [0.0092, 0.9680, 0.0211, 0.0017],
        [6.2064e-04, 0.0440, 0.8154, 0.1400],
        [0.0, 0.0, 0.0, 1.0],
    ]
)

# reference CIR parameter table (a, b, sigma), basis order 1-2, 1-3, ..., 3-2
CIR_TABLE = np.array(
    [
        [2.41e-01, 2.29e-01, 1.28e-01],
        [3.73e-02, 3.73e-02, 1.17e-01],
        [6.80e-02, 6.74e-03, 1.21e-01],
        [9.25e-02, 9.19e-02, 4.59e-02],
        [1.50e-01, 1.47e-01, 6.01e-02],
        [5.34e-02, 5.44e-02, 2.47e-01],
        [2.06e-02, 2.01e-02, 6.74e-03],
        [3.01e-01, 1.87e-01, 9.14e-03],
        [4.07e-01, 3.69e-01, 2.62e-01],
    ]
)

GEM_TABLE = np.array(
    [
        [9.21e-01, 7.70e-02, 3.15e-02],
        [1.85e00, 9.61e-03, 5.57e-03],
        [1.92e00, 1.41e-02, 1.50e-02],
        [1.32e00, 4.91e-02, 1.39e-02],
        [1.09e00, 5.43e-02, 1.74e-02],
        [1.86e00, 2.13e-02, 2.58e-02],
        [1.99e00, 8.17e-04, 1.00e-04],
        [1.03e00, 1.09e-01, 1.00e-04],
        [8.03e-01, 7.59e-02, 1.38e-01],
    ]
)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_generator(rng, K, scale=1.0):
    """Random cone matrix with infinity norm at most ``scale``."""
    L = rng.uniform(0.0, 1.0, size=(K, K))
    L[-1] = 0.0
    np.fill_diagonal(L, 0.0)
    rows = L.sum(axis=1, keepdims=True)
    L = np.where(rows > 0, L / np.maximum(rows, 1e-300), L) * scale * rng.uniform(0, 0.5, size=(K, 1))
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


# acceptance criteria report: (criterion, passed, detail), printed after the run
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
