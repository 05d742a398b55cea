import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", deadline=None, max_examples=40)
settings.load_profile("ci")

from echomc.model import long_range_ising


@pytest.fixture(scope="session")
def model_l4():
    return long_range_ising(4, J=1.0, g=1.0, alpha=1.5)


@pytest.fixture(scope="session")
def model_l6():
    return long_range_ising(6, J=1.0, g=1.0, alpha=1.5)


@pytest.fixture(scope="session")
def model_l8():
    return long_range_ising(8, J=1.0, g=1.0, alpha=1.5)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240617)


# single-site operators in the package's index convention: bit 1 <-> sz = +1
SZ = np.array([[-1.0, 0.0], [0.0, 1.0]])
SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def kron_site_operator(op: np.ndarray, site: int, size: int) -> np.ndarray:
    """Operator acting on one site; site 0 is the least significant bit."""
    out = np.eye(2 ** (size - site - 1))
    out = np.kron(out, op)
    out = np.kron(out, np.eye(2**site))
    return out


def kron_hamiltonian(model) -> np.ndarray:
    """Independent dense construction by explicit Kronecker products."""
    dim = model.dim
    h = np.zeros((dim, dim))
    for i in range(model.L):
        for j in range(i + 1, model.L):
            h -= model.couplings[i, j] * (
                kron_site_operator(SZ, i, model.L) @ kron_site_operator(SZ, j, model.L))
        h -= model.g * kron_site_operator(SX, i, model.L)
    return h
