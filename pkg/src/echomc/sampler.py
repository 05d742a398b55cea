"""Metropolis importance sampling over z-product states.

Single-spin-flip proposals (symmetric, q = 1/L per site), acceptance
min(1, exp(logw' - logw)) on echo-derived log-weights, jackknife binning
for error bars of the correlated series, and Binder-cumulant / specific-heat
ratio estimates with leave-one-bin-out errors on the ratio itself.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .model import IsingModel, SpinConfiguration, diagonal_energy
from .spectral import ThermalWeight

WeightFn = Callable[[SpinConfiguration], ThermalWeight]
ObservableFn = Callable[[SpinConfiguration], float]


@dataclass(frozen=True)
class ChainConfig:
    """One Markov chain: temperature, length, burn-in, seed, start policy.

    initial_state is "random", "all-up", or an explicit bitstring /
    SpinConfiguration. The seed fully determines the chain for fixed weight
    inputs.
    """

    temperature: float
    n_mc: int
    burn_in: int = 0
    seed: int = 0
    initial_state: str | SpinConfiguration = "random"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.n_mc < 1:
            raise ValueError("n_mc must be >= 1")
        if not 0 <= self.burn_in < self.n_mc:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_mc")


@dataclass(frozen=True)
class Estimate:
    mean: float
    error: float
    bin_size: int
    scan: tuple[tuple[int, float], ...] = ()


@dataclass
class ChainResult:
    """Per-iteration trace after burn-in plus jackknife estimates."""

    config: ChainConfig
    size: int
    states: np.ndarray
    energies: np.ndarray
    magnetizations: np.ndarray
    accepted: np.ndarray
    log_weights: np.ndarray
    observables: dict[str, np.ndarray]
    acceptance_rate: float
    estimates: dict[str, Estimate] = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return len(self.states)


def propose(psi: SpinConfiguration, rng: np.random.Generator) -> SpinConfiguration:
    """Flip one uniformly chosen spin (symmetric proposal)."""
    return psi.flipped(int(rng.integers(psi.size)))


def jackknife(samples: Sequence[float], bin_size: int) -> tuple[float, float]:
    """Jackknife mean and standard error from leave-one-bin-out means.

    Samples that do not fill a whole bin are dropped from the front.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if bin_size < 1:
        raise ValueError("bin_size must be >= 1")
    n_bins = len(samples) // bin_size
    if n_bins < 2:
        raise ValueError(f"need at least 2 bins, got {n_bins}")
    trimmed = samples[len(samples) - n_bins * bin_size:]
    bins = trimmed.reshape(n_bins, bin_size).mean(axis=1)
    total = bins.mean()
    loo = (bins.sum() - bins) / (n_bins - 1)
    err = math.sqrt((n_bins - 1) / n_bins * np.sum((loo - loo.mean()) ** 2))
    return float(total), float(err)


def _bin_sizes(n: int, min_bins: int) -> list[int]:
    sizes = []
    b = 1
    while n // b >= max(min_bins, 2):
        sizes.append(b)
        b *= 2
    return sizes or [1]


def jackknife_scan(samples: Sequence[float], min_bins: int = 16) -> Estimate:
    """Double the bin size until the error estimate plateaus (<5% growth)."""
    samples = np.asarray(samples, dtype=np.float64)
    sizes = _bin_sizes(len(samples), min_bins)
    scan = [(b, jackknife(samples, b)[1]) for b in sizes]
    mean = jackknife(samples, sizes[0])[0]
    chosen = len(scan) - 1
    for k in range(1, len(scan)):
        if scan[k][1] <= 1.05 * scan[k - 1][1]:
            chosen = k
            break
    return Estimate(mean=mean, error=scan[chosen][1], bin_size=scan[chosen][0],
                    scan=tuple(scan))


def jackknife_derived(series: Sequence[np.ndarray],
                      combine: Callable[..., np.ndarray],
                      bin_size: int) -> tuple[float, float]:
    """Jackknife for a function of several series means (ratios etc.).

    The combination is evaluated per leave-one-bin-out mean vector, which is
    what gives correct errors for correlated ratios. combine must accept
    numpy arrays elementwise.
    """
    arrays = [np.asarray(s, dtype=np.float64) for s in series]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("all series must have the same length")
    n_bins = n // bin_size
    if n_bins < 2:
        raise ValueError(f"need at least 2 bins, got {n_bins}")
    loos = []
    fulls = []
    for a in arrays:
        trimmed = a[n - n_bins * bin_size:]
        bins = trimmed.reshape(n_bins, bin_size).mean(axis=1)
        loos.append((bins.sum() - bins) / (n_bins - 1))
        fulls.append(bins.mean())
    theta = np.asarray(combine(*loos), dtype=np.float64)
    full = float(combine(*fulls))
    err = math.sqrt((n_bins - 1) / n_bins * np.sum((theta - theta.mean()) ** 2))
    return full, err


def jackknife_derived_scan(series: Sequence[np.ndarray],
                           combine: Callable[..., np.ndarray],
                           min_bins: int = 16) -> Estimate:
    n = len(np.asarray(series[0]))
    sizes = _bin_sizes(n, min_bins)
    results = [jackknife_derived(series, combine, b) for b in sizes]
    scan = [(b, r[1]) for b, r in zip(sizes, results)]
    chosen = len(scan) - 1
    for k in range(1, len(scan)):
        if scan[k][1] <= 1.05 * scan[k - 1][1]:
            chosen = k
            break
    return Estimate(mean=results[0][0], error=scan[chosen][1],
                    bin_size=scan[chosen][0], scan=tuple(scan))


def binder_cumulant(chain: ChainResult) -> tuple[float, float]:
    """U = 3/2 - <m^4> / (2 <m^2>^2) with leave-one-bin-out errors on the ratio."""
    mz = chain.magnetizations.astype(np.float64)
    m2 = mz**2
    if m2.mean() == 0:
        raise ValueError("second magnetization moment vanishes; Binder cumulant undefined")
    est = jackknife_derived_scan([m2, mz**4], lambda a2, a4: 1.5 - a4 / (2.0 * a2**2))
    return est.mean, est.error


def _resolve_initial(model: IsingModel, config: ChainConfig, weight_fn: WeightFn,
                     rng: np.random.Generator) -> tuple[SpinConfiguration, float]:
    if isinstance(config.initial_state, SpinConfiguration):
        psi = config.initial_state
    elif config.initial_state == "all-up":
        psi = SpinConfiguration.all_up(model.L)
    elif config.initial_state == "random":
        psi = SpinConfiguration.random(model.L, rng)
    else:
        psi = SpinConfiguration.from_string(config.initial_state)
    logw = weight_fn(psi).log_weight
    redraws = 0
    while not np.isfinite(logw):
        redraws += 1
        if redraws > 100:
            raise RuntimeError(
                "could not find an initial state with finite weight in 100 redraws "
                "(cut too aggressive for this temperature?)")
        psi = SpinConfiguration.random(model.L, rng)
        logw = weight_fn(psi).log_weight
    return psi, logw


def run_chain(model: IsingModel, config: ChainConfig, weight_fn: WeightFn,
              observables: Mapping[str, ObservableFn] | None = None) -> ChainResult:
    """Standard Metropolis chain over product states.

    Records the post-acceptance current state every iteration after burn-in,
    whether or not the proposal was accepted. Estimates always include
    msq = <(S^z/L)^2> and m4 = <(S^z)^4>; caller-supplied observables are
    recorded under their names, and binder / cv are derived when possible.
    """
    observables = dict(observables or {})
    rng = np.random.Generator(np.random.PCG64(config.seed))
    psi, logw = _resolve_initial(model, config, weight_fn, rng)

    n_rec = config.n_mc - config.burn_in
    states = np.empty(n_rec, dtype=np.int64)
    energies = np.empty(n_rec)
    mags = np.empty(n_rec, dtype=np.int64)
    accepted_rec = np.empty(n_rec, dtype=bool)
    logws = np.empty(n_rec)
    obs_arrays = {name: np.empty(n_rec) for name in observables}

    # per-state scalars are cached; chains revisit states constantly
    info_cache: dict[int, tuple[float, int]] = {}

    def state_info(p: SpinConfiguration) -> tuple[float, int]:
        got = info_cache.get(p.index)
        if got is None:
            got = (diagonal_energy(model, p), p.magnetization)
            info_cache[p.index] = got
        return got

    n_accepted = 0
    chunk = 1 << 14
    sites = np.empty(0, dtype=np.int64)
    us = np.empty(0)
    for i in range(config.n_mc):
        j = i % chunk
        if j == 0:
            m = min(chunk, config.n_mc - i)
            sites = rng.integers(0, model.L, size=m)
            us = 1.0 - rng.random(size=m)  # in (0, 1]: log is always finite
        prop = psi.flipped(int(sites[j]))
        logw_prop = weight_fn(prop).log_weight
        acc = math.log(us[j]) < logw_prop - logw
        if acc:
            psi, logw = prop, logw_prop
            n_accepted += 1
        if i >= config.burn_in:
            k = i - config.burn_in
            e, mag = state_info(psi)
            states[k] = psi.index
            energies[k] = e
            mags[k] = mag
            accepted_rec[k] = acc
            logws[k] = logw
            for name, fn in observables.items():
                obs_arrays[name][k] = fn(psi)

    result = ChainResult(
        config=config, size=model.L, states=states, energies=energies,
        magnetizations=mags, accepted=accepted_rec, log_weights=logws,
        observables=obs_arrays, acceptance_rate=n_accepted / config.n_mc)

    mzf = mags.astype(np.float64)
    result.estimates["msq"] = jackknife_scan((mzf / model.L) ** 2)
    result.estimates["m4"] = jackknife_scan(mzf**4)
    for name, arr in obs_arrays.items():
        result.estimates[name] = jackknife_scan(arr)
    if np.mean(mzf**2) > 0:
        est = jackknife_derived_scan([mzf**2, mzf**4],
                                     lambda a2, a4: 1.5 - a4 / (2.0 * a2**2))
        result.estimates["binder"] = est
    if "energy" in obs_arrays and "h2" in obs_arrays:
        lt2 = model.L * config.temperature**2
        est = jackknife_derived_scan([obs_arrays["h2"], obs_arrays["energy"]],
                                     lambda h2, h1: (h2 - h1**2) / lt2)
        result.estimates["cv"] = est
    return result


@dataclass
class EnsembleResult:
    chains: list[ChainResult | None]
    failures: list[str | None]
    pooled: dict[str, tuple[float, float]]

    @property
    def n_ok(self) -> int:
        return sum(c is not None for c in self.chains)

    @property
    def complete(self) -> bool:
        return all(c is not None for c in self.chains)


class _ChainJob:
    """Picklable wrapper so ensembles can run in a process pool."""

    def __init__(self, model: IsingModel, config: ChainConfig, factory):
        self.model = model
        self.config = config
        self.factory = factory

    def __call__(self) -> ChainResult:
        weight_fn, observables = self.factory(self.config)
        return run_chain(self.model, self.config, weight_fn, observables)


def _run_job(job: _ChainJob) -> ChainResult:
    return job()


def run_ensemble(model: IsingModel, configs: Sequence[ChainConfig], factory,
                 n_workers: int = 1) -> EnsembleResult:
    """Independent chains pooled by unweighted chain-mean averaging.

    factory(config) -> (weight_fn, observables) builds chain-local state
    (echo caches, RNG streams), so chains share nothing mutable. The pooled
    error is the scatter of chain means; a failed chain leaves a None slot
    and its error message rather than aborting the ensemble.
    """
    temps = {c.temperature for c in configs}
    if len(temps) > 1:
        raise ValueError("ensemble chains must share the temperature")
    if len({c.seed for c in configs}) != len(configs):
        raise ValueError("ensemble chains must have distinct seeds")
    jobs = [_ChainJob(model, c, factory) for c in configs]
    chains: list[ChainResult | None] = [None] * len(jobs)
    failures: list[str | None] = [None] * len(jobs)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(_run_job, job) for job in jobs]
            for i, fut in enumerate(futures):
                try:
                    chains[i] = fut.result()
                except Exception as exc:  # noqa: BLE001 - per-chain status by design
                    failures[i] = f"{type(exc).__name__}: {exc}"
    else:
        for i, job in enumerate(jobs):
            try:
                chains[i] = job()
            except Exception as exc:  # noqa: BLE001
                failures[i] = f"{type(exc).__name__}: {exc}"

    ok = [c for c in chains if c is not None]
    pooled: dict[str, tuple[float, float]] = {}
    if ok:
        names = set.intersection(*(set(c.estimates) for c in ok))
        for name in sorted(names):
            means = np.array([c.estimates[name].mean for c in ok])
            if len(means) >= 2:
                err = float(means.std(ddof=1) / math.sqrt(len(means)))
            else:
                err = ok[0].estimates[name].error
            pooled[name] = (float(means.mean()), err)
    return EnsembleResult(chains=chains, failures=failures, pooled=pooled)
