import numpy as np
import pytest
from hypothesis import strategies as st

from toeplab import symbolkit


def random_real_symbol(rng, band, dim=1, scale=1.0):
    """Real trigonometric polynomial with random coefficients up to ``band`` per axis."""
    coeffs = {}
    for alpha in np.ndindex(*(2 * band + 1,) * dim):
        alpha = tuple(int(a) - band for a in alpha)
        neg = tuple(-a for a in alpha)
        if neg in coeffs:
            continue
        if alpha == neg:
            coeffs[alpha] = complex(scale * rng.standard_normal())
        else:
            c = scale * complex(rng.standard_normal(), rng.standard_normal())
            coeffs[alpha] = c
            coeffs[neg] = c.conjugate()
    return symbolkit.Symbol(dim, coeffs)


@st.composite
def real_symbols(draw, max_band=4):
    band = draw(st.integers(1, max_band))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_real_symbol(np.random.default_rng(seed), band)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def two_cos():
    return symbolkit.cosine(1, 2.0)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
