"""Named experiment configurations.

Each preset is a complete config document; the CLI deep-copies these, so
user overrides never mutate the table.
"""
from __future__ import annotations

import copy

_FIG3_L8 = {
    "model": {"L": 8, "J": 1.0, "g": 1.0, "alpha": 1.5},
    "spectral": {"dt": 0.1, "t_max": 2.0, "delta": 2.0, "p_cut": 1e-6,
                 "shift": "state-energy", "method": "auto"},
    "sampler": {"temperatures": [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12],
                "n_mc": 6000, "burn_in": 1000, "n_chains": 10, "seed": 2024,
                "initial_state": "random"},
    "output": {"trace": False},
}

_FIG2_L16 = {
    "model": {"L": 16, "J": 1.0, "g": 1.0, "alpha": 1.5},
    "spectral": {"dt": 0.1, "t_max": 1.0, "delta": 4.0, "p_cut": 1e-6,
                 "shift": "state-energy", "method": "auto"},
    "sampler": {"temperatures": [7.0], "n_mc": [500, 1000, 2000, 4000, 8000],
                "burn_in": 200, "n_chains": 1, "seed": 77,
                "initial_state": "random"},
    "output": {"trace": False},
}

_FIG4_BASE = {
    "model": {"L": 10, "J": 1.0, "g": 1.0, "alpha": 1.5},
    "spectral": {"dt": 0.1, "t_max": 4.0, "delta": 1.0, "p_cut": 5e-2,
                 "shift": "state-energy", "method": "auto"},
    "sampler": {"temperatures": [4, 6, 8, 10, 12], "n_mc": 10000,
                "burn_in": 1000, "n_chains": 1, "seed": 55,
                "initial_state": "random"},
    "protocol": {"n_shots": 100, "spam_p": 0.0, "gamma": 0.0,
                 "spam_inversion": False, "dephasing_rescale": False,
                 "scheme": "sequential", "resample": True},
    "output": {"trace": False},
}


def _fig4(n_shots, p_cut):
    cfg = copy.deepcopy(_FIG4_BASE)
    cfg["protocol"]["n_shots"] = n_shots
    cfg["spectral"]["p_cut"] = p_cut
    return cfg


_QUICK = {
    "model": {"L": 4, "J": 1.0, "g": 1.0, "alpha": 1.5},
    "spectral": {"dt": 0.1, "t_max": 2.0, "delta": 2.0, "p_cut": 1e-6,
                 "shift": "state-energy", "method": "auto"},
    "sampler": {"temperatures": [4.0, 8.0], "n_mc": 400, "burn_in": 100,
                "n_chains": 2, "seed": 1, "initial_state": "random"},
    "output": {"trace": False},
}

PRESETS: dict[str, dict] = {
    "fig3-L8": _FIG3_L8,
    "fig2-L16": _FIG2_L16,
    "fig4-noise": _fig4(100, 5e-2),
    "fig4-noise-100k": _fig4(100_000, 8e-4),
    "fig4-exact": _fig4(None, 1e-6),
    "quick": _QUICK,
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return copy.deepcopy(PRESETS[name])
