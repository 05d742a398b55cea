"""Filtered work distributions p_psi(omega) and Boltzmann log-weights.

The echo series G(t), sampled at t_k = k dt for k = 0..N, is extended to
negative times by conjugate symmetry and transformed on the discrete grid

    p(omega_n) = (dt / 2pi) sum_{k=-N}^{N} e^{i omega_n k dt}
                 [G(|k| dt) e^{i shift k dt}]^(conj for k<0) e^{-(k dt delta)^2 / 2}

with omega_n = 2 pi n / (dt (2N+1)), n = -N..N, measured relative to the
shift energy. The Gaussian factor is a time-domain filter of standard
deviation 1/delta, i.e. spectral lines acquire width delta. Shifting by the
state energy keeps the spectrum centred so dt only needs to resolve the
energy fluctuations, not the extensive total energy.

Boltzmann weights integrate e^{-omega/T} against the distribution; all
weight handling is in the log domain so Metropolis ratios never overflow at
low temperature.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .dynamics import EchoSeries

IMAG_RESIDUE_WARN = 1e-6


@dataclass
class WorkDistribution:
    """p_psi(omega) on the symmetric discrete frequency grid.

    omega is relative to shift_energy (add it back for absolute scales).
    cut is the threshold already applied; None means the raw transform,
    which may contain small negative ringing weights.
    """

    omega: np.ndarray
    weights: np.ndarray
    shift_energy: float
    filter_width_delta: float
    cut: float | None = None
    imag_residue: float = 0.0

    @property
    def d_omega(self) -> float:
        return float(self.omega[1] - self.omega[0])

    @property
    def suspect(self) -> bool:
        """True when the transform was not real to tolerance (corrupted input)."""
        return self.imag_residue > IMAG_RESIDUE_WARN

    @property
    def degenerate(self) -> bool:
        """True when no weight survived the cut."""
        return not np.any(self.weights > 0)


@dataclass(frozen=True)
class ThermalWeight:
    """ln p_psi(T); -inf marks a state whose distribution was cut to nothing."""

    log_weight: float
    temperature: float


def work_distribution(echo: EchoSeries, delta: float,
                      shift: float | None = None) -> WorkDistribution:
    """Discrete Fourier transform of the filtered echo.

    shift defaults to the source-state energy recorded on the series.
    Negative-time samples come from conjugate symmetry, so the result is
    real by construction; the imaginary residue is checked, recorded, and
    discarded.
    """
    if delta <= 0:
        raise ValueError("filter width delta must be positive")
    if shift is None:
        shift = echo.source_energy
    grid = echo.grid
    n = grid.n_steps
    m = 2 * n + 1
    t = grid.times
    f_pos = echo.values * np.exp(1j * shift * t) * np.exp(-0.5 * (t * delta) ** 2)
    f = np.zeros(m, dtype=np.complex128)
    f[: n + 1] = f_pos
    f[n + 1:] = np.conj(f_pos[1:][::-1])  # k = -N..-1 wrapped to N+1..2N
    p = grid.dt / (2.0 * np.pi) * m * np.fft.ifft(f)
    p = np.fft.fftshift(p)
    residue = float(np.max(np.abs(p.imag)))
    if residue > IMAG_RESIDUE_WARN:
        warnings.warn(f"work distribution imaginary residue {residue:.2e}; "
                      f"input echo violates conjugate symmetry", stacklevel=2)
    omega = 2.0 * np.pi * np.arange(-n, n + 1) / (grid.dt * m)
    wd = WorkDistribution(omega=omega, weights=p.real.copy(), shift_energy=float(shift),
                          filter_width_delta=float(delta), imag_residue=residue)
    norm = wd.d_omega * wd.weights.sum()
    if abs(norm - 1.0) > 2e-2:
        warnings.warn(f"work distribution normalization {norm:.4f} deviates from 1",
                      stacklevel=2)
    return wd


def moments(wd: WorkDistribution, n: int) -> float:
    """d_omega * sum omega_abs^n * weights, with the shift restored."""
    omega_abs = wd.omega + wd.shift_energy
    return float(wd.d_omega * np.sum(omega_abs**n * wd.weights))


def central_moment(wd: WorkDistribution, n: int) -> float:
    """n-th central moment, normalized by the zeroth moment."""
    m0 = moments(wd, 0)
    mean = moments(wd, 1) / m0
    omega_abs = wd.omega + wd.shift_energy
    return float(wd.d_omega * np.sum((omega_abs - mean) ** n * wd.weights) / m0)


def apply_cut(wd: WorkDistribution, p_cut: float) -> WorkDistribution:
    """Zero all weights below p_cut (negative ringing always included)."""
    if p_cut < 0:
        raise ValueError("p_cut must be >= 0")
    weights = np.where(wd.weights < p_cut, 0.0, wd.weights)
    return replace(wd, weights=weights, cut=float(p_cut))


def boltzmann_weight(wd: WorkDistribution, temperature: float) -> ThermalWeight:
    """ln p_psi(T) = -shift/T + ln( d_omega * sum e^{-omega/T} weights ).

    Log-sum-exp with max subtraction; the explicit -shift/T term restores
    the absolute frequency scale. Requires a cut distribution (weights are
    then nonnegative); a fully zeroed one yields -inf.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if wd.cut is None:
        raise ValueError("apply_cut before boltzmann_weight (weights must be nonnegative)")
    if wd.degenerate:
        return ThermalWeight(log_weight=-np.inf, temperature=float(temperature))
    log = logsumexp(-wd.omega / temperature, b=wd.weights * wd.d_omega)
    return ThermalWeight(log_weight=float(log - wd.shift_energy / temperature),
                         temperature=float(temperature))


def hamiltonian_moment_weight(wd: WorkDistribution, temperature: float, n: int) -> float:
    """Per-state estimator p~_psi(T) / p_psi(T) for <H^n>_T.

    p~_psi(T) = integral omega^n e^{-omega/T} p(omega) d omega on the
    absolute scale. The shift factor cancels in the ratio; the remaining
    sums are stabilized by max subtraction. Chain-averaging this estimator
    gives <H^n>_T (n=1: energy; n=2 feeds the specific heat
    C_V = (<H^2> - <H>^2) / (L T^2)), up to the exactly known filter
    broadening of the distribution.

    Returns NaN for a degenerate (fully cut) distribution.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if wd.cut is None:
        raise ValueError("apply_cut before hamiltonian_moment_weight")
    if wd.degenerate:
        return float("nan")
    support = wd.weights > 0
    omega = wd.omega[support]
    w = wd.weights[support]
    a = -omega / temperature
    a -= a.max()
    tilted = np.exp(a) * w
    omega_abs = omega + wd.shift_energy
    return float(np.sum(omega_abs**n * tilted) / np.sum(tilted))


def covers_spectrum(dt: float, g: float, size: int, delta: float) -> bool:
    """True when the grid span 2pi/dt exceeds twice 3*sqrt(g^2 L + delta^2).

    The work distribution of a product state has standard deviation
    g*sqrt(L) before filtering; below this margin the discrete transform
    wraps spectral weight around the frequency window.
    """
    return 2.0 * np.pi / dt > 2.0 * 3.0 * np.sqrt(g * g * size + delta * delta)


def warn_if_uncovered(dt: float, g: float, size: int, delta: float) -> bool:
    ok = covers_spectrum(dt, g, size, delta)
    if not ok:
        warnings.warn(
            f"frequency span {2*np.pi/dt:.2f} does not cover "
            f"2*3*sqrt(g^2 L + delta^2) = {6*np.sqrt(g*g*size+delta*delta):.2f}; "
            f"reduce dt", stacklevel=2)
    return ok


def write_work_distribution_csv(path, wd: WorkDistribution) -> None:
    """Columns: omega_shifted, weight."""
    with open(path, "w") as fh:
        fh.write("omega_shifted,weight\n")
        for o, w in zip(wd.omega, wd.weights):
            fh.write(f"{float(o)!r},{float(w)!r}\n")
