"""Long-range transverse-field Ising chain on L sites.

H = -sum_{i<j} K_ij sz_i sz_j - g sum_i sx_i,  K_ij = J / |i-j|^alpha.

Basis convention: a z-product state is encoded as an integer index whose
bit i (least significant = site 0 = leftmost ion) holds the spin on site i,
with bit 1 <-> sz = +1 and bit 0 <-> sz = -1. The chain is open; couplings
are the bare power law (no Kac rescaling).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

DENSE_SIZE_CAP = 14  # dense matrices only up to 2^14; above that use the matrix-free action


@dataclass(frozen=True)
class SpinConfiguration:
    """A z-basis product state, stored as a tuple of L bits (site 0 first)."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) < 1:
            raise ValueError("a spin configuration needs at least one site")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0 or 1")

    @property
    def size(self) -> int:
        return len(self.bits)

    @property
    def index(self) -> int:
        """Basis-vector index: bit i of the integer is the spin on site i."""
        idx = 0
        for i, b in enumerate(self.bits):
            idx |= b << i
        return idx

    @property
    def magnetization(self) -> int:
        """Total S^z = sum_i sz_i, an integer with the parity of L."""
        ones = sum(self.bits)
        return 2 * ones - len(self.bits)

    def spins(self) -> np.ndarray:
        """Spin values +-1 as an int8 array."""
        return np.array([2 * b - 1 for b in self.bits], dtype=np.int8)

    def flipped(self, site: int) -> "SpinConfiguration":
        if not 0 <= site < len(self.bits):
            raise ValueError(f"site {site} out of range for L={len(self.bits)}")
        bits = list(self.bits)
        bits[site] ^= 1
        return SpinConfiguration(tuple(bits))

    def prefix(self, j: int) -> "SpinConfiguration | None":
        """The restriction to the j leftmost sites (None for j=0)."""
        if not 0 <= j <= len(self.bits):
            raise ValueError(f"prefix length {j} out of range")
        if j == 0:
            return None
        return SpinConfiguration(self.bits[:j])

    @classmethod
    def from_index(cls, index: int, size: int) -> "SpinConfiguration":
        if not 0 <= index < 2**size:
            raise ValueError(f"index {index} out of range for L={size}")
        return cls(tuple((index >> i) & 1 for i in range(size)))

    @classmethod
    def from_string(cls, s: str) -> "SpinConfiguration":
        """Parse a bitstring like '0110'; leftmost character is site 0."""
        if not s or any(c not in "01" for c in s):
            raise ValueError(f"malformed bitstring {s!r}: use characters 0/1 only")
        return cls(tuple(int(c) for c in s))

    @classmethod
    def all_up(cls, size: int) -> "SpinConfiguration":
        return cls((1,) * size)

    @classmethod
    def alternating(cls, size: int) -> "SpinConfiguration":
        return cls(tuple(i % 2 for i in range(size)))

    @classmethod
    def random(cls, size: int, rng: np.random.Generator) -> "SpinConfiguration":
        return cls(tuple(int(b) for b in rng.integers(0, 2, size=size)))


def magnetization_moment(psi: SpinConfiguration, n: int) -> float:
    """(sum_i sz_i)^n for a product state."""
    if n < 1:
        raise ValueError("moment order must be a positive integer")
    return float(psi.magnetization**n)


@dataclass(eq=False)
class IsingModel:
    """Ferromagnetic long-range Ising chain with transverse field.

    Treat instances as immutable after construction; the lazily built
    per-configuration diagonal-energy table is the only internal state and
    is safe to share across workers once built.
    """

    L: int
    J: float
    g: float
    alpha: float
    couplings: np.ndarray = field(repr=False)
    _diagonal_table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("L must be >= 0")
        if self.couplings.shape != (self.L, self.L):
            raise ValueError("coupling matrix must be L x L")

    @property
    def dim(self) -> int:
        return 2**self.L


def long_range_ising(L: int, J: float = 1.0, g: float = 1.0, alpha: float = 1.5) -> IsingModel:
    """Build the chain with K_ij = J/|i-j|^alpha, K_ii = 0, open boundaries."""
    if L < 0:
        raise ValueError("L must be >= 0")
    k = np.zeros((L, L))
    for i in range(L):
        for j in range(L):
            if i != j:
                k[i, j] = J / abs(i - j) ** alpha
    return IsingModel(L=L, J=J, g=g, alpha=alpha, couplings=k)


def restricted_model(model: IsingModel, j: int) -> IsingModel:
    """The same chain on the j leftmost sites only.

    Shelved sites do not interact, so the restriction is the top-left j x j
    coupling block with the same field. j=0 is the empty model (echo = 1).
    """
    if not 0 <= j <= model.L:
        raise ValueError(f"restriction size {j} out of range for L={model.L}")
    if j == model.L:
        return model
    return IsingModel(L=j, J=model.J, g=model.g, alpha=model.alpha,
                      couplings=model.couplings[:j, :j].copy())


def diagonal_energy(model: IsingModel, psi: SpinConfiguration) -> float:
    """E_psi = -sum_{i<j} K_ij sz_i sz_j  (the transverse field is off-diagonal)."""
    if psi.size != model.L:
        raise ValueError(f"state has {psi.size} sites, model has {model.L}")
    s = psi.spins().astype(np.float64)
    return float(-0.5 * s @ model.couplings @ s)


def diagonal_energies(model: IsingModel) -> np.ndarray:
    """Diagonal energies of all 2^L configurations, built once and cached.

    Memory is 2^L floats; this is what makes repeated Hamiltonian
    applications O(L * 2^L).
    """
    if model._diagonal_table is None:
        dim = model.dim
        table = np.zeros(dim)
        # chunked so the +-1 spin matrix never exceeds ~2^20 rows at once
        chunk = min(dim, 1 << 20)
        sites = np.arange(model.L)
        for start in range(0, dim, chunk):
            idx = np.arange(start, min(start + chunk, dim), dtype=np.int64)
            spins = (((idx[:, None] >> sites[None, :]) & 1) * 2 - 1).astype(np.float64)
            table[start:start + len(idx)] = -0.5 * np.einsum(
                "ni,ij,nj->n", spins, model.couplings, spins)
        model._diagonal_table = table
    return model._diagonal_table


@njit(cache=True)
def _hv_real(diag, g, v, out, L):
    dim = v.shape[0]
    for idx in range(dim):
        acc = 0.0
        for i in range(L):
            acc += v[idx ^ (1 << i)]
        out[idx] = diag[idx] * v[idx] - g * acc


@njit(cache=True)
def _hv_complex(diag, g, v, out, L):
    dim = v.shape[0]
    for idx in range(dim):
        acc = 0.0 + 0.0j
        for i in range(L):
            acc += v[idx ^ (1 << i)]
        out[idx] = diag[idx] * v[idx] - g * acc


def apply_hamiltonian(model: IsingModel, v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Matrix-free H @ v.

    The diagonal part uses the precomputed per-configuration energies; the
    transverse-field part flips single bits. Deterministic element order, so
    results are bit-for-bit reproducible.
    """
    v = np.asarray(v)
    if v.shape != (model.dim,):
        raise ValueError(f"vector has shape {v.shape}, expected ({model.dim},)")
    diag = diagonal_energies(model)
    if np.iscomplexobj(v):
        v = np.ascontiguousarray(v, dtype=np.complex128)
        if out is None:
            out = np.empty_like(v)
        _hv_complex(diag, float(model.g), v, out, model.L)
    else:
        v = np.ascontiguousarray(v, dtype=np.float64)
        if out is None:
            out = np.empty_like(v)
        _hv_real(diag, float(model.g), v, out, model.L)
    return out


def basis_vector(model: IsingModel, psi: SpinConfiguration, dtype=np.complex128) -> np.ndarray:
    if psi.size != model.L:
        raise ValueError(f"state has {psi.size} sites, model has {model.L}")
    v = np.zeros(model.dim, dtype=dtype)
    v[psi.index] = 1.0
    return v


def dense_hamiltonian(model: IsingModel) -> np.ndarray:
    """Dense real-symmetric H, assembled from the diagonal table and bit flips.

    Capped at L <= 14 (16384^2 doubles); use apply_hamiltonian beyond that.
    """
    if model.L > DENSE_SIZE_CAP:
        raise ValueError(f"dense construction capped at L={DENSE_SIZE_CAP}, got L={model.L}")
    dim = model.dim
    h = np.diag(diagonal_energies(model)).astype(np.float64)
    idx = np.arange(dim)
    for i in range(model.L):
        h[idx, idx ^ (1 << i)] -= model.g
    return h


def all_configurations(L: int) -> list[SpinConfiguration]:
    return [SpinConfiguration.from_index(i, L) for i in range(2**L)]


def magnetization_table(L: int) -> np.ndarray:
    """S^z of every configuration index, as a float array of length 2^L."""
    idx = np.arange(2**L, dtype=np.int64)
    ones = np.zeros(2**L, dtype=np.int64)
    for i in range(L):
        ones += (idx >> i) & 1
    return (2 * ones - L).astype(np.float64)
