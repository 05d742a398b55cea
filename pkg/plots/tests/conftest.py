import json

import numpy as np
import pytest


def write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def make_curves(path, temps=(2, 4, 6, 8, 10, 12)):
    rows = [(t, 0.8 / (1 + 0.3 * t), 0.01, 1.0 / (1 + 0.2 * t), 0.02,
             -6.0 + 0.3 * t, 0.2 / t) for t in temps]
    write_csv(path, ["T", "msq", "msq_err", "binder", "binder_err", "energy", "cv"], rows)


def make_oracle(path, temps=(2, 4, 6, 8, 10, 12)):
    rows = [(t, 0.8 / (1 + 0.3 * t), 1.0 / (1 + 0.2 * t), -6.0 + 0.3 * t, 0.2 / t)
            for t in temps]
    write_csv(path, ["T", "msq", "binder", "energy", "cv"], rows)


def make_echo(path, n=21):
    t = 0.1 * np.arange(n)
    g = np.exp(-1j * 2.0 * t) * np.exp(-0.5 * (1.5 * t) ** 2)
    write_csv(path, ["t", "re_g", "im_g"], list(zip(t, g.real, g.imag)))


def make_wd(path, n=41):
    omega = np.linspace(-10, 10, n)
    w = np.exp(-0.5 * (omega / 2.0) ** 2) / (2.0 * np.sqrt(2 * np.pi))
    write_csv(path, ["omega_shifted", "weight"], list(zip(omega, w)))


def make_error_scaling(path):
    n = np.array([500, 1000, 2000, 4000, 8000], dtype=float)
    err = 7.0 / np.sqrt(n)
    write_csv(path, ["n_mc", "sz2", "sz2_err"], list(zip(n, 60 + 0 * n, err)))


def make_summary(path, p_cut=5e-2):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"spectral": {"p_cut": p_cut}}))


@pytest.fixture()
def results_dir(tmp_path):
    """A results tree with the conventional layout of the experiment scripts."""
    make_echo(tmp_path / "states/echo_polarized.csv")
    make_echo(tmp_path / "states/echo_alternating.csv")
    make_wd(tmp_path / "states/wd_polarized.csv")
    make_wd(tmp_path / "states/wd_alternating.csv")
    make_curves(tmp_path / "scaling/curves.csv", temps=(7,))
    make_error_scaling(tmp_path / "scaling/error_scaling.csv")
    make_curves(tmp_path / "algorithm/curves.csv")
    make_oracle(tmp_path / "oracle/oracle.csv")
    make_curves(tmp_path / "shots100/curves.csv", temps=(4, 6, 8, 10, 12))
    make_curves(tmp_path / "shots100k/curves.csv", temps=(4, 6, 8, 10, 12))
    make_curves(tmp_path / "noiseless/curves.csv", temps=(4, 6, 8, 10, 12))
    make_wd(tmp_path / "shots100/wd_polarized_noisy.csv")
    make_summary(tmp_path / "shots100/summary.json")
    return tmp_path
