"""Unit tests for the hole-burning isolation pipeline."""
import json
import math

import numpy as np
import pytest

from iontomo.ensemble import (ACTIVE_LEVEL, EnsembleSpec, IonEnsemble,
                              Rectangular, sample_ensemble)
from iontomo.errors import EstimationError, ParameterError
from iontomo.prep import (PreparationPlan, apply_narrowing, burn_trench,
                          feature_width, narrowing_survival, prepare,
                          rabi_density, rabi_postselect, repump_antihole,
                          spectral_density, write_rabi_csv, write_report_json,
                          write_spectral_csv)
from iontomo.pulses import PEAK_RABI
from iontomo.rng import stream
from iontomo.units import TWO_PI


def uniform_line(n, width_hz, seed=0, rabi_spread=0.0):
    return sample_ensemble(EnsembleSpec(n, Rectangular(TWO_PI * width_hz),
                                        rabi_spread=rabi_spread, seed=seed))


class TestPlan:
    def test_defaults_are_consistent(self):
        plan = PreparationPlan()
        assert plan.shelve_fraction == pytest.approx(2 / 3)
        assert plan.repump_acceptance == pytest.approx(450e3)
        # The nominal 2pi selection pulse runs exactly at the peak drive.
        assert TWO_PI / plan.select_pulse_duration == pytest.approx(PEAK_RABI)

    @pytest.mark.parametrize("kw", [
        {"trench_width": 0.0},
        {"antihole_fwhm": -1.0},
        {"band_inner": 600e3},            # above band_outer
        {"select_n_pulses": 0},
        {"narrowing_rounds": -1},
        {"branching": (0.5, 0.5, 0.5)},   # does not sum to 1
        {"branching": (1.2, -0.2, 0.0)},
        {"burn_residual": 1.0},
    ])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ParameterError):
            PreparationPlan(**kw)


class TestBurn:
    def test_in_trench_ions_shelve_at_the_residual_level(self):
        plan = PreparationPlan()
        ens = IonEnsemble(np.zeros(5000), np.ones(5000))
        out = burn_trench(ens, plan, stream(1, "burn"))
        frac = out.n_active / 5000
        assert frac == pytest.approx(plan.burn_residual, abs=3e-3)
        shelved = ~out.active
        assert np.all(out.populations[shelved, ACTIVE_LEVEL] == 0.0)
        assert np.allclose(out.populations[shelved].sum(axis=1), 1.0)
        assert np.all(out.bloch[shelved] == (0.0, 0.0, -1.0))

    def test_out_of_trench_ions_are_untouched(self):
        plan = PreparationPlan()
        ens = IonEnsemble(np.full(100, TWO_PI * 3e6), np.ones(100))
        out = burn_trench(ens, plan, stream(2, "burn"))
        assert out.n_active == 100

    def test_shelved_fraction_counts_the_trench(self):
        # Uniform 4 MHz line against a 2 MHz trench: half the ions sit
        # inside and essentially all of those shelve.
        plan = PreparationPlan()
        ens = uniform_line(40_000, 4e6, seed=3)
        out = burn_trench(ens, plan, stream(3, "burn"))
        shelved_frac = 1.0 - out.n_active / len(ens)
        assert shelved_frac == pytest.approx(0.5, abs=0.02)

    def test_input_ensemble_is_not_mutated(self):
        ens = IonEnsemble(np.zeros(50), np.ones(50))
        burn_trench(ens, PreparationPlan(), stream(4, "burn"))
        assert ens.n_active == 50


class TestRepump:
    def make_burned(self, detuning_hz, n, seed):
        ens = IonEnsemble(np.full(n, TWO_PI * detuning_hz), np.ones(n),
                          active=np.zeros(n, dtype=bool))
        return ens

    def test_line_center_comes_back(self):
        plan = PreparationPlan()
        out = repump_antihole(self.make_burned(0.0, 2000, 5), plan,
                              stream(5, "pump"))
        assert out.n_active / 2000 >= 0.99
        back = out.active
        assert np.all(out.populations[back, ACTIVE_LEVEL] == 1.0)
        assert np.all(out.bloch[back] == (0.0, 0.0, -1.0))

    def test_half_width_point_comes_back_half_the_time(self):
        plan = PreparationPlan()
        for sign in (+1, -1):
            out = repump_antihole(
                self.make_burned(sign * plan.antihole_fwhm / 2, 4000, 6),
                plan, stream(6, "pump", sign))
            assert out.n_active / 4000 == pytest.approx(0.5, abs=0.03)

    def test_acceptance_cap_blocks_far_ions(self):
        plan = PreparationPlan()
        out = repump_antihole(self.make_burned(480e3, 500, 7), plan,
                              stream(7, "pump"))
        assert out.n_active == 0

    def test_antihole_fwhm_matches_target(self):
        # Burn a uniform line, repump, and fit the resulting feature.
        plan = PreparationPlan()
        ens = uniform_line(40_000, 1e6, seed=8)
        burned = burn_trench(ens, plan, stream(8, "burn"))
        pumped = repump_antihole(burned, plan, stream(8, "pump"))
        centers, dens = spectral_density(pumped, bin_width_hz=10e3,
                                         span_hz=500e3)
        fwhm_khz = feature_width(centers, dens, 0.5)
        assert fwhm_khz == pytest.approx(300.0, rel=0.10)


class TestNarrowing:
    def test_survival_examples(self):
        plan = PreparationPlan()
        s = narrowing_survival(plan, [0.0, 200e3])
        assert s[0] >= 0.9
        assert s[1] <= 0.01

    def test_survival_is_symmetric(self):
        plan = PreparationPlan()
        s = narrowing_survival(plan, [-30e3, 30e3])
        assert s[0] == s[1]

    def test_survival_curve_widths(self):
        plan = PreparationPlan()
        d = np.linspace(0, 60e3, 601)
        s = narrowing_survival(plan, d)
        two_sided = np.concatenate([s[::-1], s[1:]])
        x = np.concatenate([-d[::-1], d[1:]]) / 1e3
        assert feature_width(x, two_sided, 0.1) == pytest.approx(53.2, abs=1.0)
        assert feature_width(x, two_sided, 0.5) == pytest.approx(49.3, abs=1.0)

    def test_monte_carlo_matches_survival_curve(self):
        plan = PreparationPlan()
        for det in (10e3, 30e3):
            n = 2000
            ens = IonEnsemble(np.full(n, TWO_PI * det), np.ones(n))
            out = apply_narrowing(ens, plan, stream(9, "narrow", det))
            want = narrowing_survival(plan, [det])[0]
            assert out.n_active / n == pytest.approx(want, abs=0.05)

    def test_center_survives_at_any_drive_strength(self):
        plan = PreparationPlan()
        n = 500
        rng = stream(10, "scales")
        ens = IonEnsemble(np.zeros(n), rng.uniform(0.7, 1.3, n))
        out = apply_narrowing(ens, plan, stream(10, "narrow"))
        assert out.n_active >= 0.95 * n

    def test_zero_rounds_is_identity(self):
        plan = PreparationPlan(narrowing_rounds=0)
        ens = IonEnsemble(np.full(50, TWO_PI * 100e3), np.ones(50))
        out = apply_narrowing(ens, plan, stream(11, "narrow"))
        assert out.n_active == 50


class TestRabiSelect:
    def test_nominal_ion_always_survives(self):
        plan = PreparationPlan()
        ens = IonEnsemble(np.zeros(300), np.ones(300))
        out = rabi_postselect(ens, plan, stream(12, "select"))
        assert out.n_active == 300

    def test_half_scale_ion_is_discarded(self):
        # Scale 0.5 turns each 2pi pulse into a perfect pi pulse, so the
        # ion gambles on branching ten times: survival (1/3)^10.
        plan = PreparationPlan()
        ens = IonEnsemble(np.zeros(1000), np.full(1000, 0.5))
        out = rabi_postselect(ens, plan, stream(13, "select"))
        assert 1.0 - out.n_active / 1000 >= 0.995

    def test_survivors_rest_in_the_ground_state(self):
        plan = PreparationPlan()
        rng = stream(14, "scales")
        ens = IonEnsemble(np.zeros(400), rng.uniform(0.7, 1.3, 400))
        out = rabi_postselect(ens, plan, stream(14, "select"))
        assert np.all(out.bloch[:, 2] == -1.0)


class TestWidthHelper:
    def test_triangle_width_is_exact(self):
        centers = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
        density = np.array([0.0, 1.0, 2.0, 1.0, 0.0])
        assert feature_width(centers, density, 0.5) == pytest.approx(2.0)
        assert feature_width(centers, density, 0.25) == pytest.approx(3.0)

    def test_empty_density_rejected(self):
        with pytest.raises(EstimationError):
            feature_width([0.0, 1.0], [0.0, 0.0], 0.5)
        with pytest.raises(ParameterError):
            feature_width([0.0, 1.0], [1.0, 1.0], 1.5)


@pytest.fixture(scope="module")
def prepared():
    return prepare(seed=0)


class TestPrepare:
    def test_stage_counts_are_frozen(self, prepared):
        _, rep = prepared
        assert rep.initial_count == 40_000
        assert (rep.active_after_burn, rep.active_after_repump,
                rep.active_after_narrowing, rep.active_after_selection) \
            == (39, 14921, 1802, 651)

    def test_attrition_bounds(self, prepared):
        _, rep = prepared
        assert rep.active_after_burn <= rep.initial_count
        assert rep.active_after_repump <= rep.initial_count
        assert rep.active_after_narrowing <= rep.active_after_repump
        assert rep.active_after_selection <= rep.active_after_narrowing
        assert rep.active_after_selection < 0.02 * rep.initial_count

    def test_final_feature_is_contained_and_steep(self, prepared):
        ens, rep = prepared
        det_khz = np.abs(ens.detuning) / TWO_PI / 1e3
        assert np.all(det_khz <= 40.0)
        w10 = feature_width(rep.spectral_bins_khz, rep.spectral_density, 0.1)
        w50 = feature_width(rep.spectral_bins_khz, rep.spectral_density, 0.5)
        assert w10 == pytest.approx(50.0, rel=0.2)
        assert w50 / w10 > 0.8

    def test_survivors_are_pure_and_grounded(self, prepared):
        ens, _ = prepared
        assert np.all(ens.active)
        assert np.all(ens.populations[:, ACTIVE_LEVEL] == 1.0)
        assert np.all(ens.bloch == (0.0, 0.0, -1.0))

    def test_rabi_selection_spread(self, prepared):
        _, rep = prepared
        assert 0.05 <= rep.surviving_rabi_halfwidth <= 0.20

    def test_prepare_is_deterministic(self, prepared):
        ens, rep = prepared
        ens2, rep2 = prepare(seed=0)
        assert np.array_equal(ens2.detuning, ens.detuning)
        assert rep2.to_dict() == rep.to_dict()
        ens3, _ = prepare(seed=1)
        assert not np.array_equal(ens3.detuning, ens.detuning)

    def test_report_files(self, prepared, tmp_path):
        _, rep = prepared
        jpath = tmp_path / "prep.json"
        write_report_json(rep, jpath)
        data = json.loads(jpath.read_text())
        assert data["counts"]["after_selection"] == 651
        spath = tmp_path / "spectral.csv"
        write_spectral_csv(rep, spath)
        lines = spath.read_text().splitlines()
        assert lines[0] == "detuning_khz,active_density"
        assert len(lines) == len(rep.spectral_bins_khz) + 1
        rpath = tmp_path / "rabi.csv"
        write_rabi_csv(rep, rpath)
        assert rpath.read_text().splitlines()[0] == "rabi_scale,active_density"


def test_density_helpers_validate():
    ens = IonEnsemble(np.zeros(5), np.ones(5))
    with pytest.raises(ParameterError):
        spectral_density(ens, bin_width_hz=0.0)
    with pytest.raises(ParameterError):
        rabi_density(ens, lo=1.0, hi=0.5)
