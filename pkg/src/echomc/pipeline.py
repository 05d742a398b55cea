"""Glue from echo series to Metropolis weights.

A pipeline owns a chain-local echo provider (noiseless evolution or a
simulated Ramsey measurement), turns each state's echo into a cut work
distribution, and hands the sampler a log-weight plus the per-state
Hamiltonian-moment estimators. Everything is cached per state bit pattern,
so a Markov chain revisiting states pays for each echo once.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .dynamics import EchoSeries, TimeGrid, loschmidt_series
from .model import IsingModel, SpinConfiguration
from .sampler import ChainConfig
from .spectral import (
    ThermalWeight,
    apply_cut,
    boltzmann_weight,
    hamiltonian_moment_weight,
    warn_if_uncovered,
    work_distribution,
)

DEFAULT_CACHE_SIZE = 1 << 16


@dataclass(frozen=True)
class SpectralParams:
    """Frequency-analysis settings shared by every state in a run."""

    dt: float
    t_max: float
    delta: float
    p_cut: float
    shift: str = "state-energy"  # or "none"
    method: str = "auto"

    def __post_init__(self):
        if self.shift not in ("state-energy", "none"):
            raise ValueError(f"unknown shift policy {self.shift!r}")
        if self.p_cut < 0:
            raise ValueError("p_cut must be >= 0")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_t_max(self.dt, self.t_max)


class LRUCache:
    """Least-recently-used mapping with a fixed capacity."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._data: OrderedDict = OrderedDict()

    def get(self, key):
        try:
            self._data.move_to_end(key)
            return self._data[key]
        except KeyError:
            return None

    def put(self, key, value) -> None:
        self._data[key] = value
        self._data.move_to_end(key)
        if len(self._data) > self.capacity:
            self._data.popitem(last=False)

    def __len__(self) -> int:
        return len(self._data)


class NoiselessEchoProvider:
    """Exact echo series, LRU-cached per state bit pattern."""

    def __init__(self, model: IsingModel, grid: TimeGrid, method: str = "auto",
                 cache_size: int = DEFAULT_CACHE_SIZE):
        self.model = model
        self.grid = grid
        self.method = method
        self.cache = LRUCache(cache_size)
        self.evaluations = 0

    def series(self, psi: SpinConfiguration) -> EchoSeries:
        hit = self.cache.get(psi.index)
        if hit is None:
            hit = loschmidt_series(self.model, psi, self.grid, method=self.method)
            self.evaluations += 1
            self.cache.put(psi.index, hit)
        return hit


class ThermalWeightPipeline:
    """state -> (log-weight, energy estimators), cached per bit pattern.

    Calling the pipeline gives the sampler's weight function; ``observables``
    exposes the per-state estimators whose chain averages give <H>_T and
    <H^2>_T (the latter feeds the specific heat).
    """

    def __init__(self, provider, params: SpectralParams, temperature: float,
                 check_coverage: bool = True):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.provider = provider
        self.params = params
        self.temperature = temperature
        # A resampling provider redraws measurement noise per weight call (as
        # the experiment would per proposal). Weights are then not memoized;
        # the latest evaluation per state is still held so that observable
        # estimators reuse the measurement in force for the current state
        # instead of triggering extra draws.
        self._memoize = not getattr(provider, "resample", False)
        self._cache: dict[int, tuple[float, float, float]] = {}
        if check_coverage:
            model = provider.model
            warn_if_uncovered(params.dt, model.g, model.L, params.delta)

    def _evaluate(self, psi: SpinConfiguration) -> tuple[float, float, float]:
        echo = self.provider.series(psi)
        shift = echo.source_energy if self.params.shift == "state-energy" else 0.0
        wd = work_distribution(echo, self.params.delta, shift=shift)
        wd = apply_cut(wd, self.params.p_cut)
        w = boltzmann_weight(wd, self.temperature)
        if np.isfinite(w.log_weight):
            h1 = hamiltonian_moment_weight(wd, self.temperature, 1)
            h2 = hamiltonian_moment_weight(wd, self.temperature, 2)
        else:
            h1 = h2 = float("nan")
        got = (w.log_weight, h1, h2)
        self._cache[psi.index] = got
        return got

    def _held(self, psi: SpinConfiguration) -> tuple[float, float, float]:
        got = self._cache.get(psi.index)
        return got if got is not None else self._evaluate(psi)

    def __call__(self, psi: SpinConfiguration) -> ThermalWeight:
        if self._memoize:
            logw, _, _ = self._held(psi)
        else:
            logw, _, _ = self._evaluate(psi)
        return ThermalWeight(log_weight=logw, temperature=self.temperature)

    def energy_estimator(self, psi: SpinConfiguration) -> float:
        return self._held(psi)[1]

    def h2_estimator(self, psi: SpinConfiguration) -> float:
        return self._held(psi)[2]

    @property
    def observables(self):
        return {"energy": self.energy_estimator, "h2": self.h2_estimator}


@dataclass(frozen=True)
class ProtocolSetup:
    """Measurement-simulation settings for a noisy run.

    resample=False measures each state once per run (cached, the default);
    resample=True redraws the measurement on every proposal evaluation, as
    the experiment would.
    """

    noise: object  # echomc.protocol.NoiseModel
    scheme: str = "sequential"
    resample: bool = False


@dataclass
class PipelineSpec:
    """Picklable recipe for building chain-local pipelines in workers.

    protocol is None for noiseless runs; otherwise a ProtocolSetup, in which
    case the chain seed also salts the per-state measurement streams.
    """

    model: IsingModel
    params: SpectralParams
    temperature: float
    protocol: ProtocolSetup | None = None
    cache_size: int = DEFAULT_CACHE_SIZE

    def build(self, config: ChainConfig):
        grid = self.params.grid
        if self.protocol is None:
            provider = NoiselessEchoProvider(self.model, grid, self.params.method,
                                             self.cache_size)
        else:
            from .protocol import RamseyEchoProvider  # local import avoids a cycle
            setup = self.protocol
            if isinstance(setup, tuple):
                setup = ProtocolSetup(*setup)
            provider = RamseyEchoProvider(self.model, grid, setup.noise, setup.scheme,
                                          master_seed=config.seed,
                                          method=self.params.method,
                                          cache_size=self.cache_size,
                                          resample=setup.resample)
        pipe = ThermalWeightPipeline(provider, self.params, self.temperature,
                                     check_coverage=False)
        return pipe, pipe.observables

    # run_ensemble factory interface
    def __call__(self, config: ChainConfig):
        return self.build(config)
