"""Simulated trapped-ion measurement of the Loschmidt echo.

The echo magnitude r = |G(t)| comes from the return probability after time
evolution. The phase comes from Ramsey interferometry against a shelved
reference: either a sequence of single-ion experiments, one per site, whose
phase increments add up to the full phase, or a single GHZ-state experiment.

Segment j interferes the echo of the j leftmost active sites with that of
j+1 active sites (the rest shelved); the return probability is

    M(theta) = 1/4 |G_j + e^{i theta} G_{j+1}|^2
             = 1/4 (r_j^2 + r_{j+1}^2 + 2 r_j r_{j+1} cos(theta + dphi_{j+1}))

and the stabilized fringe y(theta) = (4 M - r_j^2 - r_{j+1}^2) / (2 r_j r_{j+1})
is fit to cos(theta + dphi) with the phase increment as the only unknown.
The GHZ variant replaces one arm with the stationary all-shelved register:
N(theta) = 1/4 (r^2 + 1 + 2 r cos(theta + phi)).

Noise model: binomial projection noise at n_shots per amplitude point and
n_shots/4 per fringe point; uncorrelated per-qubit assignment errors
multiply every measured return probability by (1-p)^L for the L-ion
register; dephasing multiplies the echo of a j-active-site state by
exp(-gamma j t). Mitigations: divide measured probabilities by (1-p)^L
(inverse of the tensor-product error channel for the target outcome) and
rescale amplitudes by exp(+gamma j t). The fringe transform is insensitive
to the assignment-error factor (it cancels in y), so only reported
amplitudes need mitigation in the sequential scheme.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import EchoSeries, TimeGrid, echo_table, loschmidt_series
from .model import IsingModel, SpinConfiguration, diagonal_energy, restricted_model
from .pipeline import DEFAULT_CACHE_SIZE, LRUCache

# Four equally spaced fringe phases in [0, pi). The half-open grid is a
# balanced design: sum_i sin^2(theta_i + phi) = 2 for every phi, so the fit
# has no blind spots and the two-component projection is the exact
# unconstrained least-squares solution. Including both endpoints 0 and pi
# would duplicate the cosine component and waste a quarter of the shots.
THETA_GRID = np.array([0.0, 0.25 * np.pi, 0.5 * np.pi, 0.75 * np.pi])
BULK_TABLE_CAP = 12  # restricted echo tables are built in bulk up to 2^12 states


@dataclass(frozen=True)
class NoiseModel:
    """Measurement imperfections; n_shots=None means exact probabilities.

    spam_p is the per-qubit assignment error probability, gamma the
    dephasing rate in units of J.
    """

    n_shots: int | None = None
    spam_p: float = 0.0
    gamma: float = 0.0
    spam_inversion: bool = False
    dephasing_rescale: bool = False

    def __post_init__(self):
        if self.n_shots is not None and self.n_shots < 1:
            raise ValueError("n_shots must be >= 1 (or None for exact probabilities)")
        if not 0.0 <= self.spam_p < 0.5:
            raise ValueError("spam_p must be in [0, 0.5)")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    @property
    def exact(self) -> bool:
        return self.n_shots is None

    @property
    def fringe_shots(self) -> int | None:
        return None if self.n_shots is None else max(1, self.n_shots // 4)

    def readout_factor(self, n_qubits: int) -> float:
        """(1-p)^n: probability that all n qubits of the target outcome read correctly."""
        return (1.0 - self.spam_p) ** n_qubits


NOISELESS = NoiseModel()


@dataclass
class RamseyRecord:
    """One time point of the sequential protocol.

    amplitudes[j] is the (mitigation-corrected) estimate of |G_j| for the
    j-leftmost-sites echo, j = 0..L; increments[j] the fitted phase
    difference of segment j. Raw hit counts are None in exact mode.
    """

    t: float
    theta_grid: np.ndarray
    amplitudes: np.ndarray
    increments: np.ndarray
    usable: bool
    n_shots: int | None
    amp_hits_left: np.ndarray | None = None
    amp_hits_right: np.ndarray | None = None
    fringe_hits: np.ndarray | None = None

    @property
    def phase(self) -> float:
        return float(self.increments.sum())


@dataclass
class GhzRecord:
    t: float
    theta_grid: np.ndarray
    amplitude: float
    phase: float
    usable: bool
    n_shots: int | None
    amp_hits: int | None = None
    fringe_hits: np.ndarray | None = None


def wrap_phase(phi):
    """Map angles to the half-open interval (-pi, pi]."""
    w = np.mod(np.asarray(phi) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return w if w.ndim else float(w)


_DESIGN = np.stack([np.cos(THETA_GRID), -np.sin(THETA_GRID)], axis=1)
_DESIGN_PINV = np.linalg.pinv(_DESIGN)


def fit_cosine_phase(y: np.ndarray, theta: np.ndarray = THETA_GRID) -> np.ndarray:
    """Least-squares fit of y(theta) = cos(theta + phi) for the single phase.

    Initialized from the unconstrained two-component projection (atan2 of
    the discrete cosine/sine amplitudes), then Newton-refined on the
    one-parameter objective; vectorized over leading axes of y. Returns
    phases in (-pi, pi].
    """
    y = np.asarray(y, dtype=np.float64)
    if theta is THETA_GRID:
        coef = y @ _DESIGN_PINV.T
    else:
        design = np.stack([np.cos(theta), -np.sin(theta)], axis=1)
        coef = y @ np.linalg.pinv(design).T
    phi = np.arctan2(coef[..., 1], coef[..., 0])

    # start Newton from the best of four probes around the projection value
    probes = phi[..., None] + np.array([0.0, 0.5 * np.pi, np.pi, -0.5 * np.pi])
    resid = y[..., None, :] - np.cos(theta[None, :] + probes[..., None])
    costs = np.sum(resid**2, axis=-1)
    phi = np.take_along_axis(probes, np.argmin(costs, axis=-1)[..., None], axis=-1)[..., 0]

    for _ in range(60):
        s = np.sin(theta + phi[..., None])
        c = np.cos(theta + phi[..., None])
        r = y - c
        grad = 2.0 * np.sum(r * s, axis=-1)
        curv = 2.0 * np.sum(s * s + r * c, axis=-1)
        step = np.where(curv > 1e-12, grad / np.where(curv > 1e-12, curv, 1.0),
                        0.1 * np.sign(grad))
        step = np.clip(step, -0.5, 0.5)
        phi = phi - step
        if np.all(np.abs(step) < 1e-15):
            break
    return wrap_phase(phi)


class RestrictedEchoTables:
    """Exact prefix echoes G_{psi_j}(t_k) for j = 0..L on a fixed grid.

    Small restrictions (2^j <= 4096 states) are tabulated in bulk from the
    cached spectral decomposition; larger ones are evaluated state by state
    and memoized.
    """

    def __init__(self, model: IsingModel, grid: TimeGrid, method: str = "auto"):
        self.model = model
        self.grid = grid
        self.method = method
        self.restrictions = [restricted_model(model, j) for j in range(model.L + 1)]
        self._bulk: dict[int, np.ndarray] = {}
        self._lazy: dict[tuple[int, int], np.ndarray] = {}

    def values(self, j: int, prefix_index: int) -> np.ndarray:
        """Echo series (length n_steps+1) of the j-site prefix state."""
        if j == 0:
            return np.ones(self.grid.n_steps + 1, dtype=np.complex128)
        if j <= BULK_TABLE_CAP:
            table = self._bulk.get(j)
            if table is None:
                table = echo_table(self.restrictions[j], self.grid)
                self._bulk[j] = table
            return table[prefix_index]
        key = (j, prefix_index)
        hit = self._lazy.get(key)
        if hit is None:
            psi_j = SpinConfiguration.from_index(prefix_index, j)
            hit = loschmidt_series(self.restrictions[j], psi_j, self.grid,
                                   method=self.method).values
            self._lazy[key] = hit
        return hit

    def prefix_matrix(self, psi: SpinConfiguration) -> np.ndarray:
        """G_{psi_j}(t_k) for all prefixes, shape (L+1, n_steps+1)."""
        out = np.empty((self.model.L + 1, self.grid.n_steps + 1), dtype=np.complex128)
        for j in range(self.model.L + 1):
            out[j] = self.values(j, psi.index & ((1 << j) - 1))
        return out


def _binomial_fraction(rng: np.random.Generator | None, n: int | None,
                       prob: np.ndarray) -> np.ndarray:
    """Measured frequencies k/n, or the exact probabilities when n is None."""
    prob = np.clip(prob, 0.0, 1.0)
    if n is None:
        return prob
    if rng is None:
        raise ValueError("finite n_shots requires an RNG")
    return rng.binomial(n, prob) / n


def _sequential_time_series(model: IsingModel, prefix_echoes: np.ndarray,
                            times: np.ndarray, noise: NoiseModel,
                            rng: np.random.Generator | None,
                            keep_counts: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray, list]:
    """Vectorized sequential protocol over a batch of time points.

    prefix_echoes: (L+1, K) exact prefix echo values at the K times.
    Returns (r_hat_full, phase_hat, usable, records-ish tuples).
    """
    L = model.L
    k_pts = len(times)
    sites = np.arange(L + 1)
    envelope = np.exp(-noise.gamma * np.outer(sites, times))  # dephasing ~ active sites
    g_tilde = prefix_echoes * envelope
    r_tilde = np.abs(g_tilde)
    c = noise.readout_factor(L)

    q_amp = r_tilde**2 * c                       # (L+1, K)
    m_true = 0.25 * np.abs(g_tilde[:-1, None, :]
                           + np.exp(1j * THETA_GRID)[None, :, None]
                           * g_tilde[1:, None, :]) ** 2 * c        # (L, 4, K)

    # fresh draws per segment: left site j and right site j+1
    f_left = _binomial_fraction(rng, noise.n_shots, q_amp[:-1])    # (L, K)
    f_right = _binomial_fraction(rng, noise.n_shots, q_amp[1:])
    f_fringe = _binomial_fraction(rng, noise.fringe_shots, m_true)

    r_left = np.sqrt(f_left)
    r_right = np.sqrt(f_right)
    contrast = 2.0 * r_left * r_right
    with np.errstate(divide="ignore", invalid="ignore"):
        y = (4.0 * f_fringe - f_left[:, None, :] - f_right[:, None, :]) / contrast[:, None, :]
    segment_ok = contrast > 0
    usable = segment_ok.all(axis=0)

    y_fit = np.moveaxis(np.where(segment_ok[:, None, :], y, 0.0), 1, -1)  # (L, K, 4)
    increments = fit_cosine_phase(y_fit.reshape(-1, 4)).reshape(L, k_pts)
    phases = increments.sum(axis=0)

    # reported per-site amplitudes: left estimate per segment, last right for site L
    f_sites = np.concatenate([f_left, f_right[-1:]], axis=0)       # (L+1, K)
    if noise.spam_inversion:
        f_sites = f_sites / c
    r_sites = np.sqrt(np.clip(f_sites, 0.0, None))
    if noise.dephasing_rescale:
        r_sites = r_sites * np.exp(noise.gamma * np.outer(sites, times))
    r_sites = np.clip(r_sites, 0.0, 1.0)

    counts = []
    if keep_counts and noise.n_shots is not None:
        n4 = noise.fringe_shots
        counts = [(np.rint(f_left * noise.n_shots).astype(np.int64),
                   np.rint(f_right * noise.n_shots).astype(np.int64),
                   np.rint(f_fringe * n4).astype(np.int64))]
    return r_sites, increments, phases, [usable, counts]


def sequential_ramsey_phase(model: IsingModel, psi: SpinConfiguration, t: float,
                            noise: NoiseModel = NOISELESS,
                            rng: np.random.Generator | None = None,
                            prefix_echoes: np.ndarray | None = None
                            ) -> tuple[float, RamseyRecord]:
    """Phase of G_psi(t) from L single-ion Ramsey segments.

    Each segment measures both its amplitudes (n_shots each) and four fringe
    points (n_shots/4 each) and fits the stabilized fringe for its phase
    increment; the full phase is the sum of increments (the all-shelved
    reference has phase 0). A segment with vanishing contrast makes the
    whole time point unusable.
    """
    if psi.size != model.L:
        raise ValueError(f"state has {psi.size} sites, model has {model.L}")
    if prefix_echoes is None:
        tables = RestrictedEchoTables(model, TimeGrid(dt=t, n_steps=1))
        prefix_echoes = tables.prefix_matrix(psi)[:, 1:]
    times = np.array([t])
    keep = noise.n_shots is not None
    r_sites, increments, phases, (usable, counts) = _sequential_time_series(
        model, prefix_echoes, times, noise, rng, keep_counts=keep)
    record = RamseyRecord(
        t=t, theta_grid=THETA_GRID.copy(),
        amplitudes=r_sites[:, 0].copy(), increments=increments[:, 0].copy(),
        usable=bool(usable[0]), n_shots=noise.n_shots,
        amp_hits_left=counts[0][0][:, 0].copy() if counts else None,
        amp_hits_right=counts[0][1][:, 0].copy() if counts else None,
        fringe_hits=counts[0][2][:, :, 0].copy() if counts else None)
    return float(phases[0]), record


def _ghz_time_series(model: IsingModel, full_echoes: np.ndarray, times: np.ndarray,
                     noise: NoiseModel, rng: np.random.Generator | None,
                     keep_counts: bool):
    """Vectorized GHZ protocol over a batch of time points."""
    L = model.L
    envelope = np.exp(-noise.gamma * L * times)
    g_tilde = full_echoes * envelope
    r_tilde = np.abs(g_tilde)
    c = noise.readout_factor(L)

    q_amp = r_tilde**2 * c
    # N(theta) = 1/4 |1 + e^{i theta} G|^2: the phase offset rides on the evolving branch
    n_true = 0.25 * np.abs(1.0 + np.exp(1j * THETA_GRID)[:, None] * g_tilde[None, :]) ** 2 * c

    f_amp = _binomial_fraction(rng, noise.n_shots, q_amp)          # (K,)
    f_fringe = _binomial_fraction(rng, noise.fringe_shots, n_true)  # (4, K)
    if noise.spam_inversion:
        f_amp = f_amp / c
        f_fringe = f_fringe / c

    r_hat = np.sqrt(np.clip(f_amp, 0.0, None))
    usable = r_hat > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        y = (4.0 * f_fringe - f_amp[None, :] - 1.0) / (2.0 * r_hat[None, :])
    y_fit = np.where(usable[None, :], y, 0.0).T                    # (K, 4)
    phases = fit_cosine_phase(y_fit)

    if noise.dephasing_rescale:
        r_hat = r_hat * np.exp(noise.gamma * L * times)
    r_hat = np.clip(r_hat, 0.0, 1.0)

    counts = []
    if keep_counts and noise.n_shots is not None:
        counts = [(np.rint(f_amp * (c if noise.spam_inversion else 1.0)
                           * noise.n_shots).astype(np.int64),
                   np.rint(f_fringe * (c if noise.spam_inversion else 1.0)
                           * noise.fringe_shots).astype(np.int64))]
    return r_hat, phases, usable, counts


def ghz_ramsey_phase(model: IsingModel, psi: SpinConfiguration, t: float,
                     noise: NoiseModel = NOISELESS,
                     rng: np.random.Generator | None = None,
                     echo_value: complex | None = None) -> tuple[float, GhzRecord]:
    """Phase of G_psi(t) from one GHZ-state interference experiment.

    One amplitude measurement plus four fringe points per time point, no
    per-site loop; the trade-off is preparing the cat state between psi and
    the all-shelved register. The fitted phase is only defined modulo 2 pi.
    """
    if psi.size != model.L:
        raise ValueError(f"state has {psi.size} sites, model has {model.L}")
    if echo_value is None:
        echo_value = loschmidt_series(model, psi, TimeGrid(dt=t, n_steps=1)).values[1]
    keep = noise.n_shots is not None
    r_hat, phases, usable, counts = _ghz_time_series(
        model, np.array([echo_value]), np.array([t]), noise, rng, keep_counts=keep)
    record = GhzRecord(t=t, theta_grid=THETA_GRID.copy(), amplitude=float(r_hat[0]),
                       phase=float(phases[0]), usable=bool(usable[0]),
                       n_shots=noise.n_shots,
                       amp_hits=int(counts[0][0][0]) if counts else None,
                       fringe_hits=counts[0][1][:, 0].copy() if counts else None)
    return float(phases[0]), record


def amplitude_measurement(model: IsingModel, psi: SpinConfiguration, t: float,
                          noise: NoiseModel = NOISELESS,
                          rng: np.random.Generator | None = None,
                          echo_value: complex | None = None) -> float:
    """Estimate r = |G_psi(t)| from the return probability after evolution.

    True success probability |G|^2 e^{-2 gamma L t}, multiplied by (1-p)^L
    for the L-qubit readout (misreads of other outcomes into the target are
    neglected: they are suppressed by the 2^L outcome space). k successes
    out of n_shots give r_hat = sqrt(k / n_shots), corrected by the enabled
    mitigations. k = 0 is a legitimate outcome.
    """
    if psi.size != model.L:
        raise ValueError(f"state has {psi.size} sites, model has {model.L}")
    if echo_value is None:
        if t == 0:
            echo_value = 1.0 + 0.0j
        else:
            echo_value = loschmidt_series(model, psi, TimeGrid(dt=t, n_steps=1)).values[1]
    q = abs(echo_value) ** 2 * math.exp(-2.0 * noise.gamma * model.L * t)
    q_meas = float(_binomial_fraction(rng, noise.n_shots,
                                      np.array([q * noise.readout_factor(model.L)]))[0])
    if noise.spam_inversion:
        q_meas /= noise.readout_factor(model.L)
    r = math.sqrt(max(q_meas, 0.0))
    if noise.dephasing_rescale:
        r *= math.exp(noise.gamma * model.L * t)
    return min(r, 1.0)


def interference_probability(g_left: complex, g_right: complex, theta: float) -> float:
    """Exact return probability 1/4 |G_j + e^{i theta} G_{j+1}|^2 of a segment."""
    return 0.25 * abs(g_left + np.exp(1j * theta) * g_right) ** 2


def noisy_loschmidt_series(model: IsingModel, psi: SpinConfiguration, grid: TimeGrid,
                           noise: NoiseModel, scheme: str = "sequential",
                           rng: np.random.Generator | None = None,
                           tables: RestrictedEchoTables | None = None,
                           keep_records: bool = False) -> EchoSeries:
    """Reconstructed G(t_k) = r_hat e^{i phi_hat} from the simulated protocol.

    t = 0 is fixed to 1 exactly (no measurement). Time points with vanishing
    contrast are zeroed and flagged; they carry no spectral weight anyway.
    """
    if scheme not in ("sequential", "ghz"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if psi.size != model.L:
        raise ValueError(f"state has {psi.size} sites, model has {model.L}")
    if not noise.exact and rng is None:
        raise ValueError("finite n_shots requires an RNG")
    if tables is None:
        tables = RestrictedEchoTables(model, grid)
    times = grid.times[1:]
    prefix = tables.prefix_matrix(psi)
    if scheme == "sequential":
        r_sites, _, phases, (usable, _) = _sequential_time_series(
            model, prefix[:, 1:], times, noise, rng, keep_counts=keep_records)
        r_hat = r_sites[-1]
    else:
        r_hat, phases, usable, _ = _ghz_time_series(
            model, prefix[-1, 1:], times, noise, rng, keep_counts=keep_records)
    values = np.empty(grid.n_steps + 1, dtype=np.complex128)
    values[0] = 1.0
    values[1:] = np.where(usable, r_hat * np.exp(1j * phases), 0.0)
    flagged = tuple(int(k) for k in (np.nonzero(~usable)[0] + 1))
    return EchoSeries(grid=grid, values=values, source_energy=diagonal_energy(model, psi),
                      flagged=flagged)


class RamseyEchoProvider:
    """Chain-local provider of simulated noisy echoes.

    By default each state is measured once and the result cached, keyed by
    the bit pattern: the state's stream derives from
    SeedSequence(master_seed, spawn_key=(state index,)), so cached values
    are identical no matter in which order the chain visits states.

    With resample=True every evaluation redraws the measurement noise, as
    the physical experiment would on each proposal; the stream then also
    carries a per-state visit counter, which keeps whole runs reproducible
    for a fixed master seed. Resampling exposes the measurement noise to
    the chain, so jackknife errors account for it.
    """

    def __init__(self, model: IsingModel, grid: TimeGrid, noise: NoiseModel,
                 scheme: str = "sequential", master_seed: int = 0,
                 method: str = "auto", cache_size: int = DEFAULT_CACHE_SIZE,
                 resample: bool = False):
        if scheme not in ("sequential", "ghz"):
            raise ValueError(f"unknown scheme {scheme!r}")
        self.model = model
        self.grid = grid
        self.noise = noise
        self.scheme = scheme
        self.master_seed = master_seed
        self.resample = resample and not noise.exact
        self.tables = RestrictedEchoTables(model, grid, method=method)
        self.cache = LRUCache(cache_size)
        self._visits: dict[int, int] = {}
        self.evaluations = 0

    def _measure(self, psi: SpinConfiguration, spawn_key: tuple) -> EchoSeries:
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=spawn_key)
        rng = None if self.noise.exact else np.random.Generator(np.random.PCG64(seq))
        self.evaluations += 1
        return noisy_loschmidt_series(self.model, psi, self.grid, self.noise,
                                      scheme=self.scheme, rng=rng, tables=self.tables)

    def series(self, psi: SpinConfiguration) -> EchoSeries:
        if self.resample:
            visit = self._visits.get(psi.index, 0)
            self._visits[psi.index] = visit + 1
            return self._measure(psi, (psi.index, visit))
        hit = self.cache.get(psi.index)
        if hit is None:
            hit = self._measure(psi, (psi.index,))
            self.cache.put(psi.index, hit)
        return hit


def shot_budget(n_sites: int, n_time_points: int, n_mc: int, n_shots: int | None,
                scheme: str = "sequential") -> int | None:
    """Total measurement budget N_MC * (t_max/dt) * 2 L N_s (sequential)
    or N_MC * (t_max/dt) * N_s (GHZ); None in exact mode."""
    if n_shots is None:
        return None
    per_point = 2 * n_sites * n_shots if scheme == "sequential" else n_shots
    return n_mc * n_time_points * per_point


def write_shot_counts_csv(path, records: list[RamseyRecord]) -> None:
    """Raw counts, columns: j, theta, t, hits, shots (theta empty = amplitude row)."""
    with open(path, "w") as fh:
        fh.write("j,theta,t,hits,shots\n")
        for rec in records:
            if rec.amp_hits_left is None:
                continue
            n = rec.n_shots
            n4 = max(1, n // 4)
            t = float(rec.t)
            for j in range(len(rec.amp_hits_left)):
                fh.write(f"{j},,{t!r},{int(rec.amp_hits_left[j])},{n}\n")
                fh.write(f"{j + 1},,{t!r},{int(rec.amp_hits_right[j])},{n}\n")
                for i, th in enumerate(rec.theta_grid):
                    fh.write(f"{j},{float(th)!r},{t!r},{int(rec.fringe_hits[j, i])},{n4}\n")
