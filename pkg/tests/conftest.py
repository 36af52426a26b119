import numpy as np
import pytest
from hypothesis import strategies as st

from extremeclust import SpectralEstimate, coefficients_from_spectral, row_normalize

# Six-atom reference model on the 2-norm sphere, probabilities under the 1-norm radius
REFERENCE_ATOMS = np.array([
    [0.29, 0.21, 0.50, 0.45, 0.43, 0.49],
    [0.74, 0.00, 0.59, 0.00, 0.32, 0.00],
    [0.00, 0.27, 0.00, 0.47, 0.00, 0.84],
    [0.33, 0.70, 0.63, 0.00, 0.00, 0.00],
    [0.00, 0.00, 0.00, 0.81, 0.47, 0.34],
    [0.48, 0.49, 0.25, 0.33, 0.53, 0.29],
])
REFERENCE_PROBS = np.array([0.22, 0.10, 0.13, 0.14, 0.09, 0.32])


def reference_model():
    atoms = REFERENCE_ATOMS / np.linalg.norm(REFERENCE_ATOMS, axis=1, keepdims=True)
    raw = coefficients_from_spectral(SpectralEstimate(atoms, REFERENCE_PROBS), 1.0, 6)
    return row_normalize(raw, 1.0)


def unit_points(d, min_size=1, max_size=10):
    """Hypothesis strategy: arrays of points on the nonnegative 2-norm sphere."""
    coord = st.floats(0.0, 1.0, allow_nan=False)
    row = st.lists(coord, min_size=d, max_size=d).filter(lambda r: sum(r) > 1e-3)
    return st.lists(row, min_size=min_size, max_size=max_size).map(
        lambda rows: np.array(rows) / np.linalg.norm(np.array(rows), axis=1, keepdims=True))


def random_unit(rng, n, d):
    x = np.abs(rng.normal(size=(n, d)))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
