"""Figure renderers for the simulation's result files.

Rendering is pure: a fixed backend, DPI, and style, no timestamps, so the
same inputs give byte-identical images. Each figure id names its required
inputs; `inputs_for` maps a results directory onto them using the file
names the simulation CLI writes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np  # noqa: E402

from .schema import SchemaError, read_p_cut, read_table  # noqa: E402

DPI = 150
_SAVE_KW = {"dpi": DPI, "bbox_inches": "tight", "metadata": {"Software": None}}

plt.rcParams.update({
    "figure.figsize": (4.2, 3.0),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "echomc",
})


@dataclass(frozen=True)
class FigureSpec:
    figure: str
    inputs: dict = field(default_factory=dict)
    output: str | Path = "figure.png"


def _save(fig, output) -> Path:
    out = Path(output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, **_SAVE_KW)
    plt.close(fig)
    return out


def _fig2a(inputs, output):
    """Echo time series of the two diagnostic states: Re, Im, and modulus."""
    fig, axes = plt.subplots(2, 1, sharex=True, figsize=(4.2, 4.4))
    for label, key, color in (("polarized", "echo_polarized", "C0"),
                              ("zero magnetization", "echo_alternating", "C1")):
        t = read_table(inputs[key], "echo")
        g = t["re_g"] + 1j * t["im_g"]
        axes[0].plot(t["t"], t["re_g"], color=color, label=f"Re G, {label}")
        axes[0].plot(t["t"], t["im_g"], color=color, ls="--", lw=0.9)
        axes[1].plot(t["t"], np.abs(g), color=color, label=label)
    axes[0].set_ylabel("G(t)")
    axes[0].legend(fontsize=7)
    axes[1].set_ylabel("|G(t)|")
    axes[1].set_xlabel("J t")
    axes[1].legend(fontsize=7)
    return _save(fig, output)


def _fig2b(inputs, output):
    """Work distributions of the diagnostic states on the shifted grid."""
    fig, ax = plt.subplots()
    for label, key in (("polarized", "wd_polarized"),
                       ("zero magnetization", "wd_alternating")):
        t = read_table(inputs[key], "wd")
        ax.plot(t["omega_shifted"], t["weight"], label=label)
    ax.set_xlabel(r"$(\omega - E_\psi)/J$")
    ax.set_ylabel(r"$p_\psi(\omega)$")
    ax.legend(fontsize=7)
    return _save(fig, output)


def _fig2c(inputs, output):
    """Squared magnetization vs temperature with error bars."""
    fig, ax = plt.subplots()
    t = read_table(inputs["curves"], "curves")
    ax.errorbar(t["T"], t["msq"], yerr=t["msq_err"], fmt="o", ms=3.5,
                capsize=2, label="sampling")
    if "oracle" in inputs:
        o = read_table(inputs["oracle"], "oracle")
        ax.plot(o["T"], o["msq"], "-", color="k", lw=1, label="exact")
    ax.set_xlabel("T/J")
    ax.set_ylabel(r"$\langle (S^z/L)^2 \rangle$")
    ax.legend(fontsize=7)
    return _save(fig, output)


def _fig2d(inputs, output):
    """Jackknife error of <(S^z)^2> vs chain length, log-log, -1/2 guide."""
    fig, ax = plt.subplots()
    t = read_table(inputs["error_scaling"], "error_scaling")
    n = t["n_mc"]
    ax.loglog(n, t["sz2_err"], "o-", ms=4, label="jackknife error")
    guide = t["sz2_err"][0] * np.sqrt(n[0] / n)
    ax.loglog(n, guide, "k--", lw=1, label=r"$\propto N_{\rm MC}^{-1/2}$")
    ax.set_xlabel(r"$N_{\rm MC}$")
    ax.set_ylabel(r"error of $\langle (S^z)^2 \rangle$")
    ax.legend(fontsize=7)
    return _save(fig, output)


def _overlay_vs_temperature(inputs, output, column, err_column, ylabel):
    fig, ax = plt.subplots()
    t = read_table(inputs["curves"], "curves")
    ax.errorbar(t["T"], t[column], yerr=t[err_column], fmt="o", ms=3.5,
                capsize=2, label="sampling")
    o = read_table(inputs["oracle"], "oracle")
    ax.plot(o["T"], o[column], "-", color="k", lw=1, label="exact")
    ax.set_xlabel("T/J")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)
    return _save(fig, output)


def _fig3a(inputs, output):
    return _overlay_vs_temperature(inputs, output, "msq", "msq_err",
                                   r"$\langle (S^z/L)^2 \rangle$")


def _fig3b(inputs, output):
    return _overlay_vs_temperature(inputs, output, "binder", "binder_err",
                                   "Binder cumulant")


def _fig4b(inputs, output):
    """Noisy-measurement runs vs the noiseless pipeline, with the noisy work
    distribution of the polarized state and its cut as an inset."""
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    o = read_table(inputs["oracle"], "oracle")
    ax.plot(o["T"], o["msq"], "-", color="k", lw=1, label="exact")
    t = read_table(inputs["noiseless_curves"], "curves")
    ax.errorbar(t["T"], t["msq"], yerr=t["msq_err"], fmt="s", ms=3.5, capsize=2,
                color="C0", label="noiseless")
    for key, label, color in (("curves_100", "100 shots", "C2"),
                              ("curves_100k", "100k shots", "C3")):
        t = read_table(inputs[key], "curves")
        ax.errorbar(t["T"], t["msq"], yerr=t["msq_err"], fmt="^", ms=3.5,
                    capsize=2, color=color, label=label)
    ax.set_xlabel("T/J")
    ax.set_ylabel(r"$\langle (S^z/L)^2 \rangle$")
    ax.legend(fontsize=7, loc="upper right")

    inset = ax.inset_axes([0.50, 0.38, 0.46, 0.34])
    wd = read_table(inputs["inset_wd"], "wd")
    inset.semilogy(wd["omega_shifted"], np.maximum(wd["weight"], 1e-12), lw=0.8)
    p_cut = read_p_cut(inputs["summary"])
    inset.axhline(p_cut, color="grey", ls="--", lw=0.8)
    inset.set_xlabel(r"$(\omega-E_\psi)/J$", fontsize=6)
    inset.set_ylabel(r"$p(\omega)$", fontsize=6)
    inset.tick_params(labelsize=5)
    return _save(fig, output)


RENDERERS = {
    "fig2a": (_fig2a, ("echo_polarized", "echo_alternating")),
    "fig2b": (_fig2b, ("wd_polarized", "wd_alternating")),
    "fig2c": (_fig2c, ("curves",)),
    "fig2d": (_fig2d, ("error_scaling",)),
    "fig3a": (_fig3a, ("curves", "oracle")),
    "fig3b": (_fig3b, ("curves", "oracle")),
    "fig4b": (_fig4b, ("curves_100", "curves_100k", "noiseless_curves",
                       "oracle", "inset_wd", "summary")),
}


def render(spec: FigureSpec) -> Path:
    """Render one figure; raises SchemaError on any contract violation."""
    if spec.figure not in RENDERERS:
        raise SchemaError(f"unknown figure {spec.figure!r}; "
                          f"available: {', '.join(sorted(RENDERERS))}")
    renderer, required = RENDERERS[spec.figure]
    missing = [k for k in required if k not in spec.inputs]
    if missing:
        raise SchemaError(f"{spec.figure}: missing input(s) {missing}")
    return renderer(spec.inputs, spec.output)


# file names as written by the simulation CLI / experiment scripts
_LAYOUT = {
    "fig2a": {"echo_polarized": "states/echo_polarized.csv",
              "echo_alternating": "states/echo_alternating.csv"},
    "fig2b": {"wd_polarized": "states/wd_polarized.csv",
              "wd_alternating": "states/wd_alternating.csv"},
    "fig2c": {"curves": "scaling/curves.csv"},
    "fig2d": {"error_scaling": "scaling/error_scaling.csv"},
    "fig3a": {"curves": "algorithm/curves.csv", "oracle": "oracle/oracle.csv"},
    "fig3b": {"curves": "algorithm/curves.csv", "oracle": "oracle/oracle.csv"},
    "fig4b": {"curves_100": "shots100/curves.csv",
              "curves_100k": "shots100k/curves.csv",
              "noiseless_curves": "noiseless/curves.csv",
              "oracle": "oracle/oracle.csv",
              "inset_wd": "shots100/wd_polarized_noisy.csv",
              "summary": "shots100/summary.json"},
}


def inputs_for(figure: str, in_dir: str | Path) -> dict:
    """Resolve the conventional file layout of a results directory.

    Falls back to flat names (no subdirectory) when the nested path is
    absent, so hand-assembled directories also work.
    """
    if figure not in _LAYOUT:
        raise SchemaError(f"unknown figure {figure!r}; "
                          f"available: {', '.join(sorted(_LAYOUT))}")
    base = Path(in_dir)
    resolved = {}
    for key, rel in _LAYOUT[figure].items():
        nested = base / rel
        flat = base / Path(rel).name
        resolved[key] = nested if nested.exists() or not flat.exists() else flat
    return resolved
