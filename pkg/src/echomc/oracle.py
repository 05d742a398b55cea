"""Exact-diagonalization ground truth for verification at small sizes.

Thermal expectation values, partition sums, and analytically filtered stick
spectra, all from a dense spectral decomposition. The dense matrix is
assembled here directly from the coupling matrix (an arithmetic path
independent of the matrix-free action in :mod:`echomc.model`), so agreement
between the two is a meaningful check.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .model import IsingModel, SpinConfiguration, magnetization_table
from .spectral import WorkDistribution

ED_SIZE_CAP = 14


@dataclass
class SpectralDecomposition:
    """Eigenvalues (ascending) and eigenvector columns of the dense Hamiltonian."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)


def _dense_hamiltonian(model: IsingModel) -> np.ndarray:
    """Dense H assembled pair-by-pair from the coupling matrix."""
    if model.L > ED_SIZE_CAP:
        raise ValueError(f"exact diagonalization capped at L={ED_SIZE_CAP}")
    dim = model.dim
    idx = np.arange(dim, dtype=np.int64)
    diag = np.zeros(dim)
    spins = [(2 * ((idx >> i) & 1) - 1).astype(np.float64) for i in range(model.L)]
    for i in range(model.L):
        for j in range(i + 1, model.L):
            diag -= model.couplings[i, j] * spins[i] * spins[j]
    h = np.diag(diag)
    for i in range(model.L):
        h[idx, idx ^ (1 << i)] -= model.g
    return h


_decomposition_cache: "weakref.WeakKeyDictionary[IsingModel, SpectralDecomposition]" = (
    weakref.WeakKeyDictionary()
)


def spectral_decomposition(model: IsingModel) -> SpectralDecomposition:
    dec = _decomposition_cache.get(model)
    if dec is None:
        evals, evecs = scipy.linalg.eigh(_dense_hamiltonian(model))
        dec = SpectralDecomposition(eigenvalues=evals, eigenvectors=evecs)
        _decomposition_cache[model] = dec
    return dec


def _diagonal_observable_values(model: IsingModel, observable) -> np.ndarray:
    """Per-configuration values of a z-diagonal observable."""
    if isinstance(observable, np.ndarray) and observable.ndim == 1:
        if observable.shape != (model.dim,):
            raise ValueError("diagonal observable must have length 2^L")
        return observable.astype(np.float64)
    if callable(observable):
        return np.array([float(observable(SpinConfiguration.from_index(i, model.L)))
                         for i in range(model.dim)])
    raise TypeError("observable must be a length-2^L array, a callable, or a matrix")


def thermal_expectation(model: IsingModel, observable, temperature: float) -> float:
    """<O>_T = Tr(O e^{-H/T}) / Z, stabilized by subtracting the ground energy.

    observable: length-2^L array of configuration values, a callable on
    SpinConfiguration (both z-diagonal), or a dense 2^L x 2^L matrix.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    dec = spectral_decomposition(model)
    w = np.exp(-(dec.eigenvalues - dec.eigenvalues[0]) / temperature)
    if isinstance(observable, np.ndarray) and observable.ndim == 2:
        per_state = np.einsum("cn,cd,dn->n", dec.eigenvectors, observable, dec.eigenvectors)
    else:
        values = _diagonal_observable_values(model, observable)
        per_state = values @ (dec.eigenvectors**2)
    return float((w @ per_state) / w.sum())


def partition_sum(model: IsingModel, temperature: float) -> tuple[float, float]:
    """(Z, ln Z); Z itself may overflow to inf at low temperature, ln Z never."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    dec = spectral_decomposition(model)
    log_z = float(logsumexp(-dec.eigenvalues / temperature))
    with np.errstate(over="ignore"):
        z = float(np.exp(log_z))
    return z, log_z


def stick_work_distribution(model: IsingModel, psi: SpinConfiguration, delta: float,
                            omega: np.ndarray, shift: float | None = None) -> WorkDistribution:
    """Exact overlap sticks convolved analytically with the Gaussian filter.

    p(omega) = sum_n |<psi|n>|^2 N(omega - (E_n - shift); delta), evaluated
    on the supplied (shifted) frequency grid for direct comparison with the
    discrete transform. Capped at L <= 12.
    """
    if model.L > 12:
        raise ValueError("stick spectra capped at L=12")
    if psi.size != model.L:
        raise ValueError(f"state has {psi.size} sites, model has {model.L}")
    if delta <= 0:
        raise ValueError("filter width delta must be positive")
    dec = spectral_decomposition(model)
    overlaps = dec.eigenvectors[psi.index, :] ** 2
    if shift is None:
        shift = float(overlaps @ dec.eigenvalues)  # first moment = E_psi
    centers = dec.eigenvalues - shift
    diffs = np.asarray(omega)[:, None] - centers[None, :]
    gauss = np.exp(-0.5 * (diffs / delta) ** 2) / (delta * np.sqrt(2 * np.pi))
    weights = gauss @ overlaps
    return WorkDistribution(omega=np.asarray(omega, dtype=float), weights=weights,
                            shift_energy=float(shift), filter_width_delta=float(delta))


def overlap_distribution(model: IsingModel, psi: SpinConfiguration) -> tuple[np.ndarray, np.ndarray]:
    """(eigenvalues, |<psi|n>|^2): the unfiltered stick spectrum."""
    dec = spectral_decomposition(model)
    return dec.eigenvalues, dec.eigenvectors[psi.index, :] ** 2


def thermal_curves(model: IsingModel, temperatures: Sequence[float]) -> dict[str, np.ndarray]:
    """Reference observables on a temperature grid.

    Returns msq = <(S^z/L)^2>, m4 = <(S^z)^4>, binder, energy = <H>, and
    cv = (<H^2> - <H>^2) / (L T^2).
    """
    dec = spectral_decomposition(model)
    mz = magnetization_table(model.L)
    p2 = dec.eigenvectors**2
    sz2 = (mz**2) @ p2
    sz4 = (mz**4) @ p2
    e = dec.eigenvalues
    out = {k: np.empty(len(temperatures)) for k in ("msq", "m4", "binder", "energy", "cv")}
    for i, t in enumerate(temperatures):
        if t <= 0:
            raise ValueError("temperature must be positive")
        w = np.exp(-(e - e[0]) / t)
        w /= w.sum()
        m2_avg = float(w @ sz2)
        m4_avg = float(w @ sz4)
        e_avg = float(w @ e)
        e2_avg = float(w @ (e**2))
        out["msq"][i] = m2_avg / model.L**2
        out["m4"][i] = m4_avg
        out["binder"][i] = 1.5 - m4_avg / (2.0 * m2_avg**2)
        out["energy"][i] = e_avg
        out["cv"][i] = (e2_avg - e_avg**2) / (model.L * t**2)
    return out


def exact_state_weights(model: IsingModel, temperature: float) -> np.ndarray:
    """Normalized p_psi(T) over all configurations from the exact overlaps.

    p_psi(T) / sum_psi p_psi(T) with p_psi(T) = sum_n |<psi|n>|^2 e^{-E_n/T};
    any common filter factor cancels in the normalization.
    """
    dec = spectral_decomposition(model)
    boltz = np.exp(-(dec.eigenvalues - dec.eigenvalues[0]) / temperature)
    p = (dec.eigenvectors**2) @ boltz
    return p / p.sum()
