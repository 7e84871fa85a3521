import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from antifragility import AffineFamily, DipFamily, SystemModel, is_irreducible  # noqa: E402

_ACCEPTANCE_LINES: list[str] = []


def random_metzler(rng, n, off=(0.0, 2.0), diag=(-3.0, 1.0), density=1.0):
    A = rng.uniform(*off, size=(n, n))
    if density < 1.0:
        A *= rng.random((n, n)) < density
    np.fill_diagonal(A, rng.uniform(*diag, size=n))
    return A


def random_irreducible(rng, n, **kw):
    while True:
        A = random_metzler(rng, n, **kw)
        if is_irreducible(A):
            return A


def constant_model(A, x0=None, c=None):
    A = np.asarray(A, dtype=float)
    fam = AffineFamily(A, np.zeros_like(A), (0.0, 1.0))
    return SystemModel(fam, c, x0)


@pytest.fixture
def rng():
    return np.random.default_rng(20231016)


@pytest.fixture
def dip_model():
    # the unit two-type model: A(1) = [[0, 1], [1, -2]]
    return SystemModel(DipFamily(a=1.0, b=1.0, d=-1.0, k=1.0, dose_domain=(0.0, 5.0)), [1.0, 1.0], [1.0, 1.0])


@pytest.fixture
def fast_dip_model():
    return SystemModel(DipFamily(a=100.0, b=1.0, d=-1.0, k=1.0, dose_domain=(0.0, 5.0)), [1.0, 1.0], [1.0, 1.0])


@pytest.fixture
def acceptance_report():
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
