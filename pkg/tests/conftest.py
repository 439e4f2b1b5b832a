import numpy as np
import pytest

from rqslopes.data import Dataset

# filled by test_acceptance.py; printed once at the end of the session
ACCEPTANCE_RESULTS: dict = {}


def make_data(seed, n, p, noise="logistic", beta=None):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, p))
    beta = np.linspace(1.0, -1.0, p) if beta is None else np.asarray(beta, dtype=float)
    e = rng.logistic(size=n) if noise == "logistic" else rng.standard_normal(n)
    return Dataset(0.5 + X @ beta + e, X)


@pytest.fixture
def small_data():
    return make_data(11, 9, 2)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
