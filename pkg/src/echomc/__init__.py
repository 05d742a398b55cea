"""Finite-temperature observables of the long-range transverse-field Ising
chain from short-time Loschmidt-echo dynamics.

Pipeline: Metropolis importance sampling over z-product states, with state
weights obtained by Fourier-transforming the Loschmidt echo G_psi(t) into a
filtered work distribution and Boltzmann-weighting it. Includes a full
simulation of a trapped-ion Ramsey measurement of G_psi(t) with shot noise,
SPAM and dephasing error models.
"""

__version__ = "0.1.0"

from .model import (
    IsingModel,
    SpinConfiguration,
    apply_hamiltonian,
    diagonal_energy,
    long_range_ising,
    magnetization_moment,
    restricted_model,
)

__all__ = [
    "IsingModel",
    "SpinConfiguration",
    "apply_hamiltonian",
    "diagonal_energy",
    "long_range_ising",
    "magnetization_moment",
    "restricted_model",
    "__version__",
]
