import numpy as np
import pytest
from hypothesis import settings

from missbf.data import AnalysisConfig, Dataset

settings.register_profile("default", deadline=None, print_blob=True)
settings.load_profile("default")


def make_dataset(rng, n=60, p=3, beta=None, rho=0.3, noise=1.0):
    cov = np.full((p, p), rho) + (1 - rho) * np.eye(p)
    X = rng.multivariate_normal(np.zeros(p), cov, size=n)
    beta = np.zeros(p) if beta is None else np.asarray(beta, dtype=float)
    y = 0.5 + X @ beta + noise * rng.standard_normal(n)
    return Dataset.from_arrays(y, X)


def with_missing(d, rng, prob=0.1, cols=None):
    X = np.array(d.X)
    cols = range(d.p) if cols is None else cols
    for j in cols:
        X[rng.random(d.n) < prob, j] = np.nan
    return d.replace(X=X)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def quick_cfg():
    return AnalysisConfig(draws=200, burn_in=100, thin=2, seed=7)


# acceptance criteria outcomes, printed once at the end of the session
CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
