import math

import numpy as np
import pytest

from echomc.dynamics import TimeGrid, loschmidt_series
from echomc.model import SpinConfiguration, diagonal_energy, long_range_ising, restricted_model
from echomc.protocol import (
    NOISELESS,
    GhzRecord,
    NoiseModel,
    RamseyEchoProvider,
    RamseyRecord,
    RestrictedEchoTables,
    amplitude_measurement,
    fit_cosine_phase,
    ghz_ramsey_phase,
    interference_probability,
    noisy_loschmidt_series,
    sequential_ramsey_phase,
    shot_budget,
    wrap_phase,
    write_shot_counts_csv,
    THETA_GRID,
)
from echomc.spectral import central_moment, work_distribution

GRID = TimeGrid(dt=0.1, n_steps=20)


class TestNoiseModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseModel(n_shots=0)
        with pytest.raises(ValueError):
            NoiseModel(spam_p=0.5)
        with pytest.raises(ValueError):
            NoiseModel(gamma=-0.1)

    def test_exact_flag(self):
        assert NOISELESS.exact
        assert not NoiseModel(n_shots=100).exact
        assert NoiseModel(n_shots=100).fringe_shots == 25


class TestFitCosinePhase:
    @pytest.mark.parametrize("phi", [-3.0, -1.2, 0.0, 0.4, 1.9, 3.14159])
    def test_recovers_exact_phase(self, phi):
        y = np.cos(THETA_GRID + phi)
        fitted = float(fit_cosine_phase(y))
        assert abs(wrap_phase(fitted - phi)) < 1e-10

    def test_vectorized(self):
        phis = np.linspace(-3, 3, 101)
        y = np.cos(THETA_GRID[None, :] + phis[:, None])
        fitted = fit_cosine_phase(y)
        assert np.max(np.abs(wrap_phase(fitted - phis))) < 1e-10

    def test_noisy_values_stay_close(self, rng):
        phi = 0.8
        y = np.cos(THETA_GRID + phi) + rng.normal(scale=0.05, size=4)
        fitted = float(fit_cosine_phase(y))
        assert abs(wrap_phase(fitted - phi)) < 0.3


class TestAmplitudeMeasurement:
    def test_exact_mode_no_noise(self, model_l6, rng):
        psi = SpinConfiguration.random(6, rng)
        t = 0.8
        r = amplitude_measurement(model_l6, psi, t)
        g = loschmidt_series(model_l6, psi, TimeGrid(dt=t, n_steps=1)).values[1]
        assert r == pytest.approx(abs(g), abs=1e-12)

    def test_time_zero_any_shots(self, model_l4):
        psi = SpinConfiguration.all_up(4)
        for shots in (1, 10, 1000):
            r = amplitude_measurement(model_l4, psi, 0.0, NoiseModel(n_shots=shots),
                                      np.random.default_rng(0))
            assert r == 1.0

    def test_spam_error_factor_l50(self):
        # p = 1e-3, L = 50: uncorrected |G|^2 error is 1 - (1-p)^L ~ 4.88%
        model = long_range_ising(50, J=1.0, g=1.0, alpha=1.5)
        psi = SpinConfiguration.all_up(50)
        noise = NoiseModel(spam_p=1e-3)
        r = amplitude_measurement(model, psi, 0.5, noise, echo_value=1.0 + 0.0j)
        error = 1.0 - r**2
        assert error == pytest.approx(1.0 - (1.0 - 1e-3) ** 50, rel=1e-12)
        assert error == pytest.approx(0.0488, abs=0.001)  # the ~5% figure

    def test_spam_inversion_exact(self):
        model = long_range_ising(50, J=1.0, g=1.0, alpha=1.5)
        psi = SpinConfiguration.all_up(50)
        noise = NoiseModel(spam_p=1e-3, spam_inversion=True)
        r = amplitude_measurement(model, psi, 0.5, noise, echo_value=0.7 + 0.0j)
        assert r == pytest.approx(0.7, abs=1e-12)

    def test_dephasing_rescale_exact(self, model_l6, rng):
        psi = SpinConfiguration.random(6, rng)
        t = 0.9
        g = loschmidt_series(model_l6, psi, TimeGrid(dt=t, n_steps=1)).values[1]
        noise = NoiseModel(gamma=0.1, dephasing_rescale=True)
        r = amplitude_measurement(model_l6, psi, t, noise)
        assert r == pytest.approx(abs(g), abs=1e-12)

    def test_zero_counts_allowed(self, model_l4):
        # a state with tiny return probability can legitimately give k = 0
        noise = NoiseModel(n_shots=10)
        r = amplitude_measurement(model_l4, SpinConfiguration.all_up(4), 0.5, noise,
                                  np.random.default_rng(2), echo_value=1e-6 + 0j)
        assert r == 0.0

    def test_shot_noise_scaling(self, model_l4):
        # std(r_hat) ~ 1/sqrt(n_shots): slope -0.5 +- 0.1 in log-log
        echo_value = 0.6 + 0.3j
        reps = 600
        sizes = [100, 1000, 10_000, 100_000]
        stds = []
        for i, n in enumerate(sizes):
            r = np.random.default_rng(100 + i)
            vals = [amplitude_measurement(model_l4, SpinConfiguration.all_up(4), 0.4,
                                          NoiseModel(n_shots=n), r, echo_value=echo_value)
                    for _ in range(reps)]
            stds.append(np.std(vals))
        slope = np.polyfit(np.log(sizes), np.log(stds), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.1)


class TestInterferenceIdentity:
    def test_closed_form_matches_module(self, model_l6, rng):
        # M(theta) = 1/4 |G_j + e^{i theta} G_{j+1}|^2 equals the cosine form
        psi = SpinConfiguration.random(6, rng)
        tables = RestrictedEchoTables(model_l6, GRID)
        prefix = tables.prefix_matrix(psi)
        for k in (3, 11, 19):
            for j in range(6):
                gj, gj1 = prefix[j, k], prefix[j + 1, k]
                rj, rj1 = abs(gj), abs(gj1)
                dphi = np.angle(gj1) - np.angle(gj)
                for theta in np.linspace(0, np.pi, 7):
                    lhs = interference_probability(gj, gj1, theta)
                    rhs = 0.25 * (rj**2 + rj1**2 + 2 * rj * rj1 * np.cos(theta + dphi))
                    assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_prefix_echoes_match_restricted_models(self, model_l6, rng):
        psi = SpinConfiguration.random(6, rng)
        tables = RestrictedEchoTables(model_l6, GRID)
        prefix = tables.prefix_matrix(psi)
        for j in (0, 2, 5, 6):
            sub = restricted_model(model_l6, j)
            series = loschmidt_series(sub, psi.prefix(j), GRID)
            assert np.max(np.abs(prefix[j] - series.values)) < 1e-11


class TestSequentialProtocol:
    def test_diagonal_model_phase_increments(self, rng):
        # g=0: each increment is the diagonal phase added by extending the
        # prefix by one site
        model = long_range_ising(5, J=1.0, g=0.0, alpha=1.5)
        psi = SpinConfiguration.random(5, rng)
        t = 0.6
        phi, record = sequential_ramsey_phase(model, psi, t)
        energies = [0.0] + [diagonal_energy(restricted_model(model, j), psi.prefix(j))
                            for j in range(1, 6)]
        for j in range(5):
            expected = wrap_phase(-(energies[j + 1] - energies[j]) * t)
            assert record.increments[j] == pytest.approx(expected, abs=1e-9)
        assert abs(wrap_phase(phi - (-energies[5] * t))) < 1e-9

    def test_phase_chaining_matches_full_echo(self, rng):
        for size in (2, 5, 8):
            model = long_range_ising(size, J=1.0, g=1.0, alpha=1.5)
            psi = SpinConfiguration.random(size, rng)
            tables = RestrictedEchoTables(model, GRID)
            prefix = tables.prefix_matrix(psi)
            for k in (5, 20):
                t = GRID.times[k]
                phi, record = sequential_ramsey_phase(model, psi, t,
                                                      prefix_echoes=prefix[:, k:k + 1])
                assert abs(wrap_phase(phi - np.angle(prefix[-1, k]))) < 1e-9
                assert record.usable

    def test_reconstruction_matches_dynamics(self, rng):
        for size in (2, 5, 8):
            model = long_range_ising(size, J=1.0, g=1.0, alpha=1.5)
            psi = SpinConfiguration.random(size, rng)
            exact = loschmidt_series(model, psi, GRID)
            rebuilt = noisy_loschmidt_series(model, psi, GRID, NOISELESS, "sequential")
            assert np.max(np.abs(rebuilt.values - exact.values)) < 1e-9

    def test_record_shape_and_bounds(self, model_l6, rng):
        psi = SpinConfiguration.random(6, rng)
        noise = NoiseModel(n_shots=400)
        phi, record = sequential_ramsey_phase(model_l6, psi, 0.5, noise,
                                              np.random.default_rng(4))
        assert record.amplitudes.shape == (7,)
        assert record.increments.shape == (6,)
        assert np.all((record.amplitudes >= 0) & (record.amplitudes <= 1))
        assert np.all((record.increments > -np.pi) & (record.increments <= np.pi))
        assert record.amp_hits_left.shape == (6,)
        assert record.fringe_hits.shape == (6, 4)

    def test_vanishing_contrast_flags_time_point(self, model_l4):
        # n_shots=1 at a nearly dead echo gives zero counts somewhere
        noise = NoiseModel(n_shots=1)
        series = noisy_loschmidt_series(model_l4, SpinConfiguration.alternating(4),
                                        TimeGrid(dt=0.4, n_steps=8), noise,
                                        "sequential", np.random.default_rng(10))
        assert len(series.flagged) > 0
        for k in series.flagged:
            assert series.values[k] == 0.0

    def test_spam_and_dephasing_mitigation_identity(self, model_l6, rng):
        psi = SpinConfiguration.random(6, rng)
        exact = loschmidt_series(model_l6, psi, GRID)
        noise = NoiseModel(spam_p=2e-3, gamma=0.08,
                           spam_inversion=True, dephasing_rescale=True)
        rebuilt = noisy_loschmidt_series(model_l6, psi, GRID, noise, "sequential")
        assert np.max(np.abs(rebuilt.values - exact.values)) < 1e-12


class TestGhzProtocol:
    def test_exact_mode_phase(self, model_l6, rng):
        psi = SpinConfiguration.random(6, rng)
        t = 1.1
        g = loschmidt_series(model_l6, psi, TimeGrid(dt=t, n_steps=1)).values[1]
        phi, record = ghz_ramsey_phase(model_l6, psi, t)
        assert abs(wrap_phase(phi - np.angle(g))) < 1e-10
        assert record.usable

    def test_reconstruction_matches_dynamics(self, model_l8, rng):
        psi = SpinConfiguration.random(8, rng)
        exact = loschmidt_series(model_l8, psi, GRID)
        rebuilt = noisy_loschmidt_series(model_l8, psi, GRID, NOISELESS, "ghz")
        assert np.max(np.abs(rebuilt.values - exact.values)) < 1e-9

    def test_zero_amplitude_flagged(self, model_l4):
        noise = NoiseModel(n_shots=1)
        phi, record = ghz_ramsey_phase(model_l4, SpinConfiguration.all_up(4), 0.5,
                                       noise, np.random.default_rng(1),
                                       echo_value=1e-8 + 0j)
        assert not record.usable

    def test_mitigated_exact_mode(self, model_l6, rng):
        psi = SpinConfiguration.random(6, rng)
        exact = loschmidt_series(model_l6, psi, GRID)
        noise = NoiseModel(spam_p=1e-3, gamma=0.05,
                           spam_inversion=True, dephasing_rescale=True)
        rebuilt = noisy_loschmidt_series(model_l6, psi, GRID, noise, "ghz")
        assert np.max(np.abs(rebuilt.values - exact.values)) < 1e-12

    def test_phase_variance_beats_sequential_at_equal_budget(self):
        # same total measurement budget: sequential spends 2 L n per point,
        # the GHZ scheme concentrates it into one interference experiment
        size, n_seq, reps = 6, 40, 1000
        model = long_range_ising(size, J=1.0, g=1.0, alpha=1.5)
        psi = SpinConfiguration.from_string("110100")
        t = 0.5
        tables = RestrictedEchoTables(model, TimeGrid(dt=t, n_steps=1))
        prefix = tables.prefix_matrix(psi)[:, 1:]
        true_phi = np.angle(prefix[-1, 0])
        n_ghz = 2 * size * n_seq
        rng_seq = np.random.default_rng(42)
        rng_ghz = np.random.default_rng(43)
        seq_err, ghz_err = [], []
        for _ in range(reps):
            phi_s, _ = sequential_ramsey_phase(model, psi, t, NoiseModel(n_shots=n_seq),
                                               rng_seq, prefix_echoes=prefix)
            phi_g, _ = ghz_ramsey_phase(model, psi, t, NoiseModel(n_shots=n_ghz),
                                        rng_ghz, echo_value=prefix[-1, 0])
            seq_err.append(wrap_phase(phi_s - true_phi))
            ghz_err.append(wrap_phase(phi_g - true_phi))
        assert np.var(ghz_err) <= np.var(seq_err)


class TestNoisySeries:
    def test_time_zero_fixed_to_one(self, model_l4):
        noise = NoiseModel(n_shots=16)
        series = noisy_loschmidt_series(model_l4, SpinConfiguration.all_up(4), GRID,
                                        noise, "sequential", np.random.default_rng(3))
        assert series.values[0] == 1.0 + 0.0j

    def test_finite_shots_converge_to_exact(self, model_l6, rng):
        psi = SpinConfiguration.random(6, rng)
        exact = loschmidt_series(model_l6, psi, GRID)
        noise = NoiseModel(n_shots=200_000)
        rebuilt = noisy_loschmidt_series(model_l6, psi, GRID, noise, "sequential",
                                         np.random.default_rng(8))
        assert np.max(np.abs(rebuilt.values - exact.values)) < 0.05

    def test_determinism_via_state_streams(self, model_l4):
        provider = RamseyEchoProvider(model_l4, GRID, NoiseModel(n_shots=64),
                                      master_seed=11)
        psi_a = SpinConfiguration.from_index(3, 4)
        psi_b = SpinConfiguration.from_index(9, 4)
        sa = provider.series(psi_a).values.copy()
        # a fresh provider visiting states in the opposite order reproduces values
        provider2 = RamseyEchoProvider(model_l4, GRID, NoiseModel(n_shots=64),
                                       master_seed=11)
        sb2 = provider2.series(psi_b).values.copy()
        sa2 = provider2.series(psi_a).values.copy()
        assert np.array_equal(sa, sa2)
        assert np.array_equal(provider.series(psi_b).values, sb2)

    def test_resample_mode_redraws_but_stays_reproducible(self, model_l4):
        noise = NoiseModel(n_shots=32)
        psi = SpinConfiguration.from_index(6, 4)
        prov = RamseyEchoProvider(model_l4, GRID, noise, master_seed=5, resample=True)
        first = prov.series(psi).values.copy()
        second = prov.series(psi).values.copy()
        assert not np.array_equal(first, second)  # fresh draws per evaluation
        prov2 = RamseyEchoProvider(model_l4, GRID, noise, master_seed=5, resample=True)
        assert np.array_equal(prov2.series(psi).values, first)
        assert np.array_equal(prov2.series(psi).values, second)

    def test_resample_exact_mode_is_cached(self, model_l4):
        prov = RamseyEchoProvider(model_l4, GRID, NOISELESS, master_seed=1, resample=True)
        psi = SpinConfiguration.from_index(3, 4)
        prov.series(psi)
        prov.series(psi)
        assert prov.evaluations == 1  # exact probabilities: nothing to redraw

    def test_unmitigated_dephasing_inflates_width(self, model_l6, rng):
        # exponential envelope adds heavy tails: the second central moment of
        # the work distribution must exceed g^2 L + delta^2, and match an
        # independent envelope-convolution evaluation
        psi = SpinConfiguration.random(6, rng)
        gamma, delta = 0.15, 2.0
        grid = TimeGrid(dt=0.05, n_steps=60)
        noise = NoiseModel(gamma=gamma)
        noisy = noisy_loschmidt_series(model_l6, psi, grid, noise, "sequential")
        wd = work_distribution(noisy, delta=delta)
        clean_width = model_l6.g**2 * 6 + delta**2
        assert central_moment(wd, 2) > clean_width * 1.05

        exact = loschmidt_series(model_l6, psi, grid)
        enveloped = exact.values * np.exp(-gamma * 6 * grid.times)
        from echomc.dynamics import EchoSeries
        reference = EchoSeries(grid=grid, values=enveloped,
                               source_energy=exact.source_energy)
        wd_ref = work_distribution(reference, delta=delta)
        assert central_moment(wd, 2) == pytest.approx(central_moment(wd_ref, 2),
                                                      rel=1e-9)

    def test_shot_budget_formulas(self):
        assert shot_budget(10, 40, 10_000, 100, "sequential") == 10_000 * 40 * 2 * 10 * 100
        assert shot_budget(10, 40, 10_000, 100, "ghz") == 10_000 * 40 * 100
        assert shot_budget(10, 40, 10_000, None) is None

    def test_counts_csv(self, model_l4, tmp_path):
        noise = NoiseModel(n_shots=40)
        phi, record = sequential_ramsey_phase(model_l4, SpinConfiguration.all_up(4),
                                              0.4, noise, np.random.default_rng(6))
        path = tmp_path / "counts.csv"
        write_shot_counts_csv(path, [record])
        lines = path.read_text().splitlines()
        assert lines[0] == "j,theta,t,hits,shots"
        # 2 amplitude rows + 4 fringe rows per segment
        assert len(lines) == 1 + 4 * 6
        amp_row = lines[1].split(",")
        assert amp_row[1] == ""  # amplitude rows leave theta empty
        assert int(amp_row[4]) == 40
