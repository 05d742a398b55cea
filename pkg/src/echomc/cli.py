"""Command-line driver for all experiments.

Subcommands: ``run`` (sampling pipeline per temperature), ``oracle`` (exact
reference curves), ``echo`` (single-state echo + work-distribution
diagnostics), ``protocol`` (sampling with the simulated Ramsey measurement),
``presets`` (list named configurations).

Exit codes: 0 success, 1 config error, 2 runtime failure, 3 partial results.
All outputs are deterministic for a fixed config and seed; wall-clock
timings go to a separate timing.json that is excluded from the
reproducibility contract.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .model import IsingModel, SpinConfiguration, long_range_ising
from .dynamics import loschmidt_series, write_echo_csv
from .oracle import ED_SIZE_CAP, thermal_curves
from .pipeline import PipelineSpec, ProtocolSetup, SpectralParams
from .protocol import NoiseModel, RamseyEchoProvider, shot_budget
from .sampler import ChainConfig, EnsembleResult, run_ensemble
from .spectral import apply_cut, covers_spectrum, work_distribution, write_work_distribution_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class ModelBlock:
    L: int
    J: float
    g: float
    alpha: float


@dataclass(frozen=True)
class SamplerBlock:
    temperatures: tuple[float, ...]
    n_mc: tuple[int, ...]
    burn_in: int
    n_chains: int
    seed: int
    initial_state: str


@dataclass(frozen=True)
class ProtocolBlock:
    n_shots: int | None
    spam_p: float
    gamma: float
    spam_inversion: bool
    dephasing_rescale: bool
    scheme: str
    resample: bool

    def noise_model(self) -> NoiseModel:
        return NoiseModel(n_shots=self.n_shots, spam_p=self.spam_p, gamma=self.gamma,
                          spam_inversion=self.spam_inversion,
                          dephasing_rescale=self.dephasing_rescale)


@dataclass(frozen=True)
class OutputBlock:
    trace: bool = False


@dataclass(frozen=True)
class RunConfig:
    model: ModelBlock
    spectral: SpectralParams
    sampler: SamplerBlock
    protocol: ProtocolBlock | None
    output: OutputBlock
    raw: dict

    def build_model(self) -> IsingModel:
        return long_range_ising(self.model.L, self.model.J, self.model.g, self.model.alpha)


_REQUIRED = object()


def _require(mapping: dict, field: str, types, where: str, default=_REQUIRED):
    if field not in mapping:
        if default is not _REQUIRED:
            return default
        raise ConfigError(f"missing field {where}.{field}")
    value = mapping[field]
    if types is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"field {where}.{field} has invalid type {type(value).__name__}")
    return value


def _check_no_extras(mapping: dict, allowed: set[str], where: str) -> None:
    extras = set(mapping) - allowed
    if extras:
        raise ConfigError(f"unknown field {where}.{sorted(extras)[0]}")


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document; every diagnostic names the offending field."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    _check_no_extras(doc, {"model", "spectral", "sampler", "protocol", "output"}, "config")
    for block in ("model", "spectral", "sampler"):
        if block not in doc:
            raise ConfigError(f"missing block config.{block}")

    m = doc["model"]
    _check_no_extras(m, {"L", "J", "g", "alpha"}, "model")
    model = ModelBlock(L=_require(m, "L", int, "model"),
                       J=_require(m, "J", float, "model"),
                       g=_require(m, "g", float, "model"),
                       alpha=_require(m, "alpha", float, "model"))
    if model.L < 1:
        raise ConfigError("field model.L must be >= 1")
    for name in ("J", "alpha"):
        if getattr(model, name) <= 0:
            raise ConfigError(f"field model.{name} must be positive")

    s = doc["spectral"]
    _check_no_extras(s, {"dt", "t_max", "delta", "p_cut", "shift", "method"}, "spectral")
    try:
        spectral = SpectralParams(
            dt=_require(s, "dt", float, "spectral"),
            t_max=_require(s, "t_max", float, "spectral"),
            delta=_require(s, "delta", float, "spectral"),
            p_cut=_require(s, "p_cut", float, "spectral"),
            shift=_require(s, "shift", str, "spectral", default="state-energy"),
            method=_require(s, "method", str, "spectral", default="auto"))
    except ValueError as exc:
        raise ConfigError(f"field spectral: {exc}") from exc
    for name in ("dt", "t_max", "delta"):
        if getattr(spectral, name) <= 0:
            raise ConfigError(f"field spectral.{name} must be positive")
    if spectral.method not in ("auto", "eigen", "krylov", "lanczos"):
        raise ConfigError(f"field spectral.method has invalid value {spectral.method!r}")

    sa = doc["sampler"]
    _check_no_extras(sa, {"temperatures", "n_mc", "burn_in", "n_chains", "seed",
                          "initial_state"}, "sampler")
    temps = _require(sa, "temperatures", list, "sampler")
    if not temps or any(not isinstance(t, (int, float)) or t <= 0 for t in temps):
        raise ConfigError("field sampler.temperatures must be a nonempty list of positive numbers")
    n_mc_raw = _require(sa, "n_mc", (int, list), "sampler")
    n_mcs = tuple(n_mc_raw) if isinstance(n_mc_raw, list) else (n_mc_raw,)
    if not n_mcs or any(not isinstance(n, int) or n < 1 for n in n_mcs):
        raise ConfigError("field sampler.n_mc must be a positive integer or list thereof")
    sampler = SamplerBlock(
        temperatures=tuple(float(t) for t in temps),
        n_mc=n_mcs,
        burn_in=_require(sa, "burn_in", int, "sampler", default=0),
        n_chains=_require(sa, "n_chains", int, "sampler", default=1),
        seed=_require(sa, "seed", int, "sampler", default=0),
        initial_state=_require(sa, "initial_state", str, "sampler", default="random"))
    if sampler.burn_in < 0 or sampler.burn_in >= min(n_mcs):
        raise ConfigError("field sampler.burn_in must satisfy 0 <= burn_in < n_mc")
    if sampler.n_chains < 1:
        raise ConfigError("field sampler.n_chains must be >= 1")
    if sampler.initial_state not in ("random", "all-up") and \
            any(c not in "01" for c in sampler.initial_state):
        raise ConfigError("field sampler.initial_state must be 'random', 'all-up', or a bitstring")

    protocol = None
    if doc.get("protocol") is not None:
        p = doc["protocol"]
        _check_no_extras(p, {"n_shots", "spam_p", "gamma", "spam_inversion",
                             "dephasing_rescale", "scheme", "resample"}, "protocol")
        n_shots = p.get("n_shots")
        if n_shots is not None and (not isinstance(n_shots, int) or n_shots < 1):
            raise ConfigError("field protocol.n_shots must be a positive integer or null")
        protocol = ProtocolBlock(
            n_shots=n_shots,
            spam_p=_require(p, "spam_p", float, "protocol", default=0.0),
            gamma=_require(p, "gamma", float, "protocol", default=0.0),
            spam_inversion=_require(p, "spam_inversion", bool, "protocol", default=False),
            dephasing_rescale=_require(p, "dephasing_rescale", bool, "protocol", default=False),
            scheme=_require(p, "scheme", str, "protocol", default="sequential"),
            resample=_require(p, "resample", bool, "protocol", default=False))
        if protocol.scheme not in ("sequential", "ghz"):
            raise ConfigError(f"field protocol.scheme has invalid value {protocol.scheme!r}")
        if not 0 <= protocol.spam_p < 0.5:
            raise ConfigError("field protocol.spam_p must be in [0, 0.5)")
        if protocol.gamma < 0:
            raise ConfigError("field protocol.gamma must be >= 0")

    o = doc.get("output") or {}
    _check_no_extras(o, {"trace"}, "output")
    output = OutputBlock(trace=_require(o, "trace", bool, "output", default=False))

    if not covers_spectrum(spectral.dt, model.g, model.L, spectral.delta):
        # load-time version of the frequency-coverage rule; warning, not fatal
        print(f"warning: frequency span 2pi/dt = {2*np.pi/spectral.dt:.2f} does not cover "
              f"6*sqrt(g^2 L + delta^2) = {6*np.sqrt(model.g**2*model.L + spectral.delta**2):.2f}",
              file=sys.stderr)
    return RunConfig(model=model, spectral=spectral, sampler=sampler,
                     protocol=protocol, output=output, raw=copy.deepcopy(doc))


def load_config(path: str | None, preset_name: str | None,
                seed_override: int | None = None) -> RunConfig:
    if (path is None) == (preset_name is None):
        raise ConfigError("provide exactly one of --config PATH or --preset NAME")
    if preset_name is not None:
        from .presets import preset
        try:
            doc = preset(preset_name)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from exc
    else:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {path} does not exist")
        text = p.read_text()
        if p.suffix == ".json":
            loaded = json.loads(text)
            doc = loaded.get("config", loaded)  # accept a manifest for replay
        else:
            try:
                doc = yaml.safe_load(text)
            except yaml.YAMLError as exc:
                raise ConfigError(f"config file is not valid YAML: {exc}") from exc
    if seed_override is not None:
        doc.setdefault("sampler", {})["seed"] = seed_override
    return parse_config(doc)


def chain_seed(base: int, t_index: int, n_index: int, chain: int) -> int:
    """Stable per-chain seed derived from the base seed and run coordinates."""
    ss = np.random.SeedSequence(entropy=base, spawn_key=(t_index, n_index, chain))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _json_dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def summary_schema() -> dict:
    with resources.files("echomc.schemas").joinpath("summary.schema.json").open() as fh:
        return json.load(fh)


def validate_summary(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, summary_schema())


def _estimate_entry(mean: float, error: float) -> dict | None:
    if not (np.isfinite(mean) and np.isfinite(error)):
        return None
    return {"mean": float(mean), "error": float(error)}


_RAW_NAMES = {"energy": "energy_raw", "cv": "cv_raw"}


def _pooled_estimates(config: RunConfig, ensemble: EnsembleResult) -> dict:
    est: dict[str, dict] = {}
    for name, (mean, error) in ensemble.pooled.items():
        entry = _estimate_entry(mean, error)
        if entry is not None:
            est[_RAW_NAMES.get(name, name)] = entry
    return est


def _run_pipeline(config: RunConfig, out_dir: Path, threads: int,
                  kind: str) -> tuple[int, dict]:
    model = config.build_model()
    grid = config.spectral.grid
    temps = config.sampler.temperatures
    results = []
    failures_seen = False
    all_failed = True
    seeds_manifest = {}
    noise_tuple = None
    if kind == "protocol":
        if config.protocol is None:
            raise ConfigError("missing block config.protocol (required by the protocol command)")
        noise_tuple = ProtocolSetup(noise=config.protocol.noise_model(),
                                    scheme=config.protocol.scheme,
                                    resample=config.protocol.resample)

    for ti, temperature in enumerate(temps):
        for ni, n_mc in enumerate(config.sampler.n_mc):
            spec = PipelineSpec(model=model, params=config.spectral,
                                temperature=temperature, protocol=noise_tuple)
            seeds = [chain_seed(config.sampler.seed, ti, ni, c)
                     for c in range(config.sampler.n_chains)]
            configs = [ChainConfig(temperature=temperature, n_mc=n_mc,
                                   burn_in=config.sampler.burn_in, seed=s,
                                   initial_state=config.sampler.initial_state)
                       for s in seeds]
            ensemble = run_ensemble(model, configs, spec, n_workers=threads)
            if ensemble.n_ok > 0:
                all_failed = False
            if not ensemble.complete:
                failures_seen = True
            seeds_manifest[f"T={temperature},n_mc={n_mc}"] = seeds

            estimates = _pooled_estimates(config, ensemble)
            delta = config.spectral.delta
            if "energy_raw" in estimates:
                e = estimates["energy_raw"]
                estimates["energy"] = {"mean": e["mean"] + delta**2 / temperature,
                                       "error": e["error"]}
            if "cv_raw" in estimates:
                c = estimates["cv_raw"]
                estimates["cv"] = {"mean": c["mean"] - delta**2 / (model.L * temperature**2),
                                   "error": c["error"]}
            budget = None
            if config.protocol is not None and kind == "protocol":
                budget = shot_budget(model.L, grid.n_steps, n_mc,
                                     config.protocol.n_shots, config.protocol.scheme)
            results.append({
                "temperature": float(temperature),
                "n_mc": int(n_mc),
                "burn_in": int(config.sampler.burn_in),
                "n_chains": int(config.sampler.n_chains),
                "estimates": estimates,
                "acceptance_rates": [None if c is None else float(c.acceptance_rate)
                                     for c in ensemble.chains],
                "chain_status": [f"failed: {f}" if f else "ok" for f in ensemble.failures],
                "seeds": seeds,
                "shot_budget": budget,
            })
            print(f"T={temperature} n_mc={n_mc}: "
                  + ", ".join(f"{k}={v['mean']:.4g}+-{v['error']:.2g}"
                              for k, v in sorted(estimates.items()) if k in ("msq", "binder")))
            if config.output.trace:
                trace_dir = out_dir / "traces"
                trace_dir.mkdir(exist_ok=True)
                for ci, chain in enumerate(ensemble.chains):
                    if chain is None:
                        continue
                    _write_trace_csv(trace_dir / f"T{temperature}_n{n_mc}_c{ci}.csv", chain)

    summary = {
        "schema_version": 1,
        "kind": kind,
        "code_version": __version__,
        "model": dataclasses.asdict(config.model),
        "spectral": {k: getattr(config.spectral, k)
                     for k in ("dt", "t_max", "delta", "p_cut", "shift", "method")},
        "protocol": dataclasses.asdict(config.protocol) if config.protocol else None,
        "results": results,
    }
    validate_summary(summary)
    _json_dump(out_dir / "summary.json", summary)
    _write_curves_csv(out_dir / "curves.csv", config, results)
    if len(config.sampler.n_mc) > 1:
        _write_error_scaling_csv(out_dir / "error_scaling.csv", config, results)
    manifest = {"command": kind, "config": config.raw, "code_version": __version__,
                "seeds": {"base": config.sampler.seed, "chains": seeds_manifest}}
    _json_dump(out_dir / "manifest.json", manifest)

    if all_failed:
        return EXIT_RUNTIME, summary
    return (EXIT_PARTIAL if failures_seen else EXIT_OK), summary


def _write_trace_csv(path: Path, chain) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,state,energy,sz,accepted,log_weight\n")
        for i in range(chain.n_samples):
            fh.write(f"{i},{chain.states[i]},{float(chain.energies[i])!r},"
                     f"{chain.magnetizations[i]},{int(chain.accepted[i])},"
                     f"{float(chain.log_weights[i])!r}\n")


def _write_curves_csv(path: Path, config: RunConfig, results: list[dict]) -> None:
    """Frozen columns: T,msq,msq_err,binder,binder_err,energy,cv.

    One row per temperature at the largest chain length; energy and cv are
    the filter-corrected estimates.
    """
    biggest = max(config.sampler.n_mc)
    with open(path, "w") as fh:
        fh.write("T,msq,msq_err,binder,binder_err,energy,cv\n")
        for row in results:
            if row["n_mc"] != biggest:
                continue
            est = row["estimates"]

            def get(name, what="mean"):
                entry = est.get(name)
                return "" if entry is None else repr(float(entry[what]))

            fh.write(f"{row['temperature']!r},{get('msq')},{get('msq', 'error')},"
                     f"{get('binder')},{get('binder', 'error')},"
                     f"{get('energy')},{get('cv')}\n")


def _write_error_scaling_csv(path: Path, config: RunConfig, results: list[dict]) -> None:
    """Frozen columns: n_mc,sz2,sz2_err -- the raw <(S^z)^2> and its error."""
    l2 = config.model.L ** 2
    with open(path, "w") as fh:
        fh.write("n_mc,sz2,sz2_err\n")
        for row in results:
            msq = row["estimates"].get("msq")
            if msq is None:
                continue
            fh.write(f"{row['n_mc']},{float(msq['mean'] * l2)!r},"
                     f"{float(msq['error'] * l2)!r}\n")


def cmd_run(config: RunConfig, out_dir: Path, threads: int) -> int:
    t0 = time.perf_counter()
    code, _ = _run_pipeline(config, out_dir, threads, kind="run")
    _json_dump(out_dir / "timing.json", {"wall_seconds": time.perf_counter() - t0})
    return code


def cmd_protocol(config: RunConfig, out_dir: Path, threads: int) -> int:
    if config.protocol is None:
        raise ConfigError("missing block config.protocol (required by the protocol command)")
    t0 = time.perf_counter()
    code, _ = _run_pipeline(config, out_dir, threads, kind="protocol")
    # diagnostic: noisy work distribution of the polarized state (uncut)
    model = config.build_model()
    provider = RamseyEchoProvider(model, config.spectral.grid,
                                  config.protocol.noise_model(), config.protocol.scheme,
                                  master_seed=config.sampler.seed,
                                  method=config.spectral.method)  # one-shot diagnostic: cached mode
    echo = provider.series(SpinConfiguration.all_up(model.L))
    wd = work_distribution(echo, config.spectral.delta)
    write_work_distribution_csv(out_dir / "wd_polarized_noisy.csv", wd)
    _json_dump(out_dir / "timing.json", {"wall_seconds": time.perf_counter() - t0})
    return code


def cmd_oracle(config: RunConfig, out_dir: Path) -> int:
    if config.model.L > ED_SIZE_CAP:
        raise ConfigError(f"field model.L: exact reference curves require L <= {ED_SIZE_CAP}")
    t0 = time.perf_counter()
    model = config.build_model()
    temps = config.sampler.temperatures
    curves = thermal_curves(model, temps)
    with open(out_dir / "oracle.csv", "w") as fh:
        fh.write("T,msq,binder,energy,cv\n")
        for i, t in enumerate(temps):
            fh.write(f"{float(t)!r},{float(curves['msq'][i])!r},"
                     f"{float(curves['binder'][i])!r},{float(curves['energy'][i])!r},"
                     f"{float(curves['cv'][i])!r}\n")
    manifest = {"command": "oracle", "config": config.raw, "code_version": __version__,
                "seeds": {"base": config.sampler.seed, "chains": {}}}
    _json_dump(out_dir / "manifest.json", manifest)
    _json_dump(out_dir / "timing.json", {"wall_seconds": time.perf_counter() - t0})
    return EXIT_OK


DIAGNOSTIC_STATES = ("polarized", "alternating")


def cmd_echo(config: RunConfig, out_dir: Path, state_spec: str | None) -> int:
    t0 = time.perf_counter()
    model = config.build_model()
    grid = config.spectral.grid
    targets: list[tuple[str, SpinConfiguration]] = []
    if state_spec is None:
        targets.append(("polarized", SpinConfiguration.all_up(model.L)))
        targets.append(("alternating", SpinConfiguration.alternating(model.L)))
    else:
        try:
            psi = SpinConfiguration.from_string(state_spec)
        except ValueError as exc:
            raise ConfigError(f"--state: {exc}") from exc
        if psi.size != model.L:
            raise ConfigError(f"--state: bitstring has {psi.size} sites, model.L is {model.L}")
        targets.append((f"state_{state_spec}", psi))
    for label, psi in targets:
        series = loschmidt_series(model, psi, grid, method=config.spectral.method)
        write_echo_csv(out_dir / f"echo_{label}.csv", series)
        wd = work_distribution(series, config.spectral.delta)
        write_work_distribution_csv(out_dir / f"wd_{label}.csv", wd)
    manifest = {"command": "echo", "config": config.raw, "code_version": __version__,
                "seeds": {"base": config.sampler.seed, "chains": {}}}
    _json_dump(out_dir / "manifest.json", manifest)
    _json_dump(out_dir / "timing.json", {"wall_seconds": time.perf_counter() - t0})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echomc",
        description="Thermal observables of the long-range transverse-field Ising chain "
                    "from short-time Loschmidt echoes")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", metavar="PATH", help="YAML config (or manifest.json)")
        p.add_argument("--preset", metavar="NAME", help="named configuration")
        if needs_out:
            p.add_argument("--out", metavar="DIR", required=True, help="output directory")
        p.add_argument("--seed", type=int, metavar="N", help="override sampler.seed")
        p.add_argument("--threads", type=int, metavar="N", default=None,
                       help="worker processes (default: available parallelism)")

    common(sub.add_parser("run", help="sampling pipeline per temperature"))
    common(sub.add_parser("oracle", help="exact reference curves"))
    echo_p = sub.add_parser("echo", help="single-state echo and work distribution")
    common(echo_p)
    echo_p.add_argument("--state", metavar="BITS", help="bitstring (default: polarized + alternating)")
    common(sub.add_parser("protocol", help="sampling with the simulated Ramsey measurement"))
    sub.add_parser("presets", help="list named configurations")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        from .presets import PRESETS
        for name in sorted(PRESETS):
            print(name)
        return EXIT_OK
    try:
        config = load_config(args.config, args.preset, args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        threads = args.threads
        if threads is None:
            import os
            threads = os.cpu_count() or 1
        if args.command == "run":
            return cmd_run(config, out_dir, threads)
        if args.command == "oracle":
            return cmd_oracle(config, out_dir)
        if args.command == "echo":
            return cmd_echo(config, out_dir, args.state)
        if args.command == "protocol":
            return cmd_protocol(config, out_dir, threads)
        raise RuntimeError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
