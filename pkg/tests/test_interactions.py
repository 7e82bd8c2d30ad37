"""Unit tests for dipolar shift sampling and the perturbed echo."""
import math

import numpy as np
import pytest

from iontomo.ensemble import EnsembleSpec, IonEnsemble, Rectangular, sample_ensemble
from iontomo.errors import EstimationError, ParameterError
from iontomo.interactions import (EchoExperiment, InteractionModel, echo_curve,
                                  lorentzian_hwhm, pair_shift, run_echo,
                                  sample_shifts, scale_shifts_to_hwhm,
                                  shift_hwhm, write_echo_csv, write_shift_csv)
from iontomo.units import TWO_PI


@pytest.fixture(scope="module")
def model():
    return InteractionModel()


@pytest.fixture(scope="module")
def echo_ensemble():
    return sample_ensemble(EnsembleSpec(2000, Rectangular(TWO_PI * 50e3),
                                        seed=31))


class TestModel:
    def test_reference_anchor(self, model):
        assert model.coupling == pytest.approx(15.625e9)
        assert InteractionModel.from_reference(1e9, 2.5).coupling \
            == model.coupling
        assert model.excited_density == pytest.approx(3.2e-8)
        assert model.sphere_radius_nm == pytest.approx(781.59, abs=0.01)

    @pytest.mark.parametrize("kw", [
        {"coupling": 0.0},
        {"excited_fraction": 1.5},
        {"perturber_density": -1.0},
        {"n_perturbers": 0},
    ])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ParameterError):
            InteractionModel(**kw)

    def test_pair_shift_anchors(self, model):
        # A perturber one mean spacing away on the axis doubles the
        # reference shift and flips its sign; on the equator it is the
        # reference shift; at the magic angle it vanishes.
        assert pair_shift(model, 2.5, 1.0) == pytest.approx(-2e9)
        assert pair_shift(model, 2.5, 0.0) == pytest.approx(1e9)
        assert pair_shift(model, 2.5, 1 / math.sqrt(3)) == pytest.approx(0.0, abs=1.0)
        iso = InteractionModel(isotropic=True)
        assert pair_shift(iso, 2.5, 1.0) == pytest.approx(1e9)

    def test_pair_shift_r_cubed(self, model):
        assert pair_shift(model, 5.0, 0.0) == pytest.approx(1e9 / 8)


class TestSampling:
    def test_zero_excitation_means_zero_shift(self):
        quiet = InteractionModel(excited_fraction=0.0)
        assert np.all(sample_shifts(quiet, 100, seed=1) == 0.0)

    def test_deterministic_per_seed(self, model):
        a = sample_shifts(model, 500, seed=2)
        b = sample_shifts(model, 500, seed=2)
        c = sample_shifts(model, 500, seed=3)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_position_rescaling_is_exact_r_cubed(self, model):
        base = sample_shifts(model, 1000, seed=4)
        half = sample_shifts(model, 1000, seed=4, position_scale=2.0)
        assert np.allclose(half * 8.0, base, rtol=1e-12)

    def test_bad_arguments(self, model):
        with pytest.raises(ParameterError):
            sample_shifts(model, 0)
        with pytest.raises(ParameterError):
            sample_shifts(model, 10, 0)
        with pytest.raises(ParameterError):
            sample_shifts(model, 10, position_scale=0.0)
        with pytest.raises(EstimationError):
            shift_hwhm([])

    def test_hwhm_against_analytic_lorentzian(self, model):
        # Dilute-limit stable law: HWHM = (8 pi^2 / 9 sqrt 3) C rho_exc.
        gamma = lorentzian_hwhm(model)
        assert gamma == pytest.approx(2532.5, abs=0.5)
        s = sample_shifts(model, 100_000, seed=5)
        assert shift_hwhm(s) == pytest.approx(gamma, rel=0.10)
        with pytest.raises(ParameterError):
            lorentzian_hwhm(InteractionModel(isotropic=True))

    def test_hwhm_converged_in_perturber_count(self, model):
        a = shift_hwhm(sample_shifts(model, 50_000, 64, seed=6))
        b = shift_hwhm(sample_shifts(model, 50_000, 128, seed=7))
        assert a == pytest.approx(b, rel=0.05)

    def test_median_sits_at_the_stable_law_center(self, model):
        # The kernel averages to zero, but its bulk is asymmetric: the
        # summed distribution is a Lorentzian centered at the alpha=1
        # stable drift (4 pi / 3) rho_exc C (-E[k ln |k|]), about 13%
        # of the HWHM, not at zero.
        k_log = -0.159769  # E[(1 - 3u^2) ln|1 - 3u^2|], u uniform on [0,1]
        drift = (4 * math.pi / 3) * model.excited_density * model.coupling \
            * (-k_log)
        s = sample_shifts(model, 100_000, seed=8)
        assert np.median(s) == pytest.approx(drift, rel=0.15)
        assert abs(np.median(s)) < 0.2 * shift_hwhm(s)

    def test_tails_are_symmetric(self, model):
        s = sample_shifts(model, 100_000, seed=9)
        g = lorentzian_hwhm(model)
        up, down = np.mean(s > 3 * g), np.mean(s < -3 * g)
        assert up == pytest.approx(down, rel=0.15)

    def test_rescale_to_target_hwhm(self, model):
        s = sample_shifts(model, 20_000, seed=10)
        scaled = scale_shifts_to_hwhm(s, 1e3)
        assert shift_hwhm(scaled) == pytest.approx(1e3, rel=1e-12)
        with pytest.raises(ParameterError):
            scale_shifts_to_hwhm(s, -1.0)


class TestEcho:
    def test_experiment_validation(self):
        with pytest.raises(ParameterError):
            EchoExperiment(0.0)
        with pytest.raises(ParameterError):
            EchoExperiment(1e-4, "before_everything")

    def test_unperturbed_echo_rephases_completely(self, echo_ensemble):
        amp = run_echo(echo_ensemble, EchoExperiment(200e-6, "none"))
        assert amp == pytest.approx(len(echo_ensemble), rel=1e-9)

    def test_rephasing_theorem_for_early_perturbation(self, model,
                                                      echo_ensemble):
        # Shifts present in both halves cancel exactly, whatever their size.
        shifts = 1e6 * sample_shifts(model, len(echo_ensemble), seed=11)
        amp0 = run_echo(echo_ensemble, EchoExperiment(150e-6, "none"))
        amp1 = run_echo(echo_ensemble, EchoExperiment(150e-6, "after_half"),
                        shifts=shifts)
        assert amp1 == pytest.approx(amp0, rel=1e-12)

    def test_late_perturbation_matches_characteristic_function(
            self, model, echo_ensemble):
        tau = 200e-6
        shifts = sample_shifts(model, len(echo_ensemble), seed=12)
        amp = run_echo(echo_ensemble, EchoExperiment(tau, "after_pi"),
                       shifts=shifts)
        char = abs(np.sum(np.exp(1j * TWO_PI * shifts * tau)))
        assert amp == pytest.approx(char, abs=1e-9 * len(echo_ensemble))

    def test_population_weighting(self):
        ens = IonEnsemble([0.0], [1.0], populations=[[0.25, 0.25, 0.5]])
        amp = run_echo(ens, EchoExperiment(100e-6, "none"))
        assert amp == pytest.approx(0.5, abs=1e-12)

    def test_input_errors(self, model, echo_ensemble):
        with pytest.raises(ParameterError):
            run_echo(echo_ensemble, EchoExperiment(1e-4, "after_pi"))
        with pytest.raises(ParameterError):
            run_echo(echo_ensemble, EchoExperiment(1e-4, "after_pi"),
                     shifts=np.zeros(3))
        with pytest.raises(EstimationError):
            run_echo(IonEnsemble([], []), EchoExperiment(1e-4), model)


class TestEchoCurve:
    def test_ordering_and_convergence(self, model, echo_ensemble):
        taus = np.array([1e-9, 50e-6, 100e-6, 200e-6])
        rows = echo_curve(echo_ensemble, model, taus, seed=13)
        for row in rows:
            assert row["amp_none"] >= row["amp_after_half"] - 1e-9
            assert row["amp_after_half"] >= row["amp_after_pi"] - 1e-9
        first = rows[0]
        assert first["amp_after_pi"] == pytest.approx(first["amp_none"],
                                                      rel=0.01)
        late = rows[-1]
        assert late["amp_after_pi"] < 0.5 * late["amp_none"]

    def test_stronger_coupling_speeds_the_decay(self, echo_ensemble):
        # Doubling C should halve the time at which the late-pulse echo
        # drops to half its unperturbed value.
        taus = np.linspace(5e-6, 400e-6, 80)

        def t_half(model, seed):
            rows = echo_curve(echo_ensemble, model, taus, seed=seed)
            ratio = np.array([r["amp_after_pi"] / r["amp_none"] for r in rows])
            return float(np.interp(-0.5, -ratio, taus))

        base = t_half(InteractionModel(), seed=14)
        strong = t_half(InteractionModel(coupling=2 * 15.625e9), seed=15)
        assert strong == pytest.approx(base / 2, rel=0.10)

    def test_grid_validation(self, model, echo_ensemble):
        with pytest.raises(ParameterError):
            echo_curve(echo_ensemble, model, [])
        with pytest.raises(ParameterError):
            echo_curve(echo_ensemble, model, [2e-4, 1e-4])
        with pytest.raises(ParameterError):
            echo_curve(echo_ensemble, model, [-1e-4, 1e-4])

    def test_deterministic_and_serializable(self, model, echo_ensemble,
                                            tmp_path):
        taus = np.array([50e-6, 150e-6])
        rows = echo_curve(echo_ensemble, model, taus, seed=16)
        again = echo_curve(echo_ensemble, model, taus, seed=16)
        assert rows == again
        path = tmp_path / "echo.csv"
        write_echo_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "tau_us,amp_none,amp_after_half,amp_after_pi"
        assert len(lines) == 3

    def test_shift_histogram_csv(self, model, tmp_path):
        shifts = sample_shifts(model, 5000, seed=17)
        path = tmp_path / "shifts.csv"
        write_shift_csv(shifts, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "shift_hz,density"
        assert len(lines) > 100
        total = sum(float(l.split(",")[1]) for l in lines[1:]) * 100.0
        assert 0.5 < total <= 1.0  # heavy tails fall outside the span
