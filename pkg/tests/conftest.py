import numpy as np
import pytest

from polarized import Bipartition, PureState


def random_state(dims: Bipartition, rng: np.random.Generator, scale: float = 1.0) -> PureState:
    """Unnormalized complex Gaussian state from a plain numpy generator (test oracle input)."""
    z = rng.standard_normal(dims.total) + 1j * rng.standard_normal(dims.total)
    return PureState(dims, scale * z)


def basis_state(dims: Bipartition, i: int, mu: int) -> PureState:
    amps = np.zeros(dims.total, dtype=complex)
    amps[i * dims.n_b + mu] = 1.0
    return PureState(dims, amps)


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)
