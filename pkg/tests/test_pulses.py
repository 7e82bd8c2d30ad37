"""Unit tests for envelopes, timelines, and the zero-area synthesis."""
import csv

import numpy as np
import pytest

from iontomo import dynamics, pulses
from iontomo.errors import CapabilityError, ParameterError, SynthesisError
from iontomo.pulses import (DURATION_PER_AREA, PEAK_RABI, PREP_PEAK_RABI,
                            SincDiffPulse, SquarePulse, TabulatedPulse,
                            Timeline, TimelineEvent, envelope_from_dict,
                            square_pulse, synthesize_zero_area,
                            tomography_timeline)
from iontomo.units import TWO_PI


def test_amplitude_cap_values():
    assert PEAK_RABI == TWO_PI * 250e3
    assert PREP_PEAK_RABI == TWO_PI * 400e3
    # Full-amplitude pi pulse lasts 2 us, half-pi 1 us.
    assert np.pi * DURATION_PER_AREA == pytest.approx(2e-6)


def test_square_pulse_window_and_area():
    sq = SquarePulse(1e6, 2e-6, phase=0.4)
    t = np.array([-1e-9, 0.0, 1e-6, 2e-6, 2.1e-6])
    assert np.allclose(sq.amplitude_at(t), [0, 1e6, 1e6, 1e6, 0])
    assert sq.area() == pytest.approx(2.0)
    assert sq.peak_amplitude() == 1e6


def test_square_pulse_factory_respects_cap():
    pi_pulse = square_pulse(np.pi, 2e-6)
    assert pi_pulse.amplitude == pytest.approx(PEAK_RABI)
    with pytest.raises(CapabilityError):
        square_pulse(np.pi, 1.9e-6)
    with pytest.raises(ParameterError):
        square_pulse(-0.1, 1e-6)


def test_sinc_diff_center_amplitude_and_validation():
    p = SincDiffPulse(2.0, 1e6, 0.5, 1e5, 100e-6)
    assert p.amplitude_at(50e-6) == pytest.approx(1.5)  # sinc(0) = 1
    assert p.amplitude_at(-1e-9) == 0.0
    with pytest.raises(ParameterError):
        SincDiffPulse(2.0, 1e5, 0.5, 1e6, 100e-6)  # hole wider than band


def test_tabulated_pulse_interpolates_and_validates():
    p = TabulatedPulse((0.0, 1e-6, 3e-6), (0.0, 2e6, 0.0))
    assert p.duration == 3e-6
    assert p.amplitude_at(0.5e-6) == pytest.approx(1e6)
    assert p.amplitude_at(2e-6) == pytest.approx(1e6)
    assert p.amplitude_at(5e-6) == 0.0
    assert p.peak_amplitude() == 2e6
    assert p.area() == pytest.approx(0.5 * 2e6 * 3e-6)
    with pytest.raises(ParameterError):
        TabulatedPulse((1e-6, 2e-6), (0.0, 1.0))  # must start at 0
    with pytest.raises(ParameterError):
        TabulatedPulse((0.0, 0.0, 1e-6), (0.0, 1.0, 0.0))  # non-increasing


def test_envelope_dict_round_trip():
    originals = [
        SquarePulse(1e6, 2e-6, 0.3),
        SincDiffPulse(2e6, 1e6, 1e5, 5e4, 80e-6, 1.1),
        TabulatedPulse((0.0, 1e-6, 2e-6), (0.0, 1e6, 0.0), 0.2),
    ]
    for env in originals:
        again = envelope_from_dict(env.to_dict())
        assert again == env
    with pytest.raises(ParameterError):
        envelope_from_dict({"kind": "chirp"})


def test_timeline_rejects_overlap_and_overflow():
    a = SquarePulse(1e6, 2e-6)
    with pytest.raises(ParameterError):
        Timeline((TimelineEvent(0.0, a), TimelineEvent(1e-6, a)), 10e-6)
    with pytest.raises(ParameterError):
        Timeline((TimelineEvent(9e-6, a),), 10e-6)
    tl = Timeline((TimelineEvent(0.0, a), TimelineEvent(5e-6, a)), 10e-6)
    assert tl.events[1].end == pytest.approx(7e-6)
    assert Timeline.from_dict(tl.to_dict()) == tl


def test_tomography_timeline_layout():
    prep = square_pulse(np.pi / 2, 1e-6)
    tl = tomography_timeline(prep)
    assert tl.duration == 200e-6
    starts = [ev.start for ev in tl.events]
    assert starts == [0.0, 70e-6, 140e-6]
    assert tl.events[1].pulse.area() == pytest.approx(np.pi)
    assert tl.events[1].pulse.duration == pytest.approx(2e-6)
    assert tl.events[2].pulse.area() == pytest.approx(np.pi / 2)
    with pytest.raises(ParameterError):
        tomography_timeline(SquarePulse(1e3, 80e-6))
    with pytest.raises(ParameterError):
        tomography_timeline(prep, gap=100e-6, total=200e-6)


def test_envelope_csv_dump(tmp_path):
    env = SquarePulse(1e6, 2e-6, 0.7)
    path = tmp_path / "env.csv"
    pulses.write_envelope_csv(env, path, sample_dt=1e-7)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t_us", "amplitude_rad_per_s", "phase_rad"]
    assert len(rows) == 22  # header + 21 samples for 2 us at 0.1 us
    assert float(rows[1][1]) == 1e6
    assert float(rows[-1][0]) == pytest.approx(2.0)
    assert float(rows[1][2]) == 0.7


@pytest.fixture(scope="module")
def pulse():
    return synthesize_zero_area(TWO_PI * 500e3, TWO_PI * 25e3, 120e-6)


class TestZeroAreaSynthesis:
    """Default-band synthesis, checked against an independent dense scan."""

    def test_sinc_widths_match_bands(self, pulse):
        assert pulse.b1 == pytest.approx(2 * (500e3 + pulses.EDGE_MARGIN_HZ))
        assert pulse.b2 == pytest.approx(2 * 25e3)

    def test_area_is_null_but_energy_is_not(self, pulse):
        assert abs(pulse.area()) <= 1e-6 * pulse.abs_area()
        assert pulse.abs_area() > 1.0

    def test_peak_respects_preparation_cap(self, pulse):
        assert 0 < pulse.peak_amplitude() <= PREP_PEAK_RABI * (1 + 1e-9)

    def test_excitation_contract_on_dense_grid(self, pulse):
        # Finer than the synthesis probe grid, to catch ripple dips.
        band = TWO_PI * np.arange(37.5e3, 450.1e3, 4e3)
        inner = TWO_PI * np.linspace(0.0, 20e3, 21)
        exc_band = dynamics.excitation_probability(pulse, band, step_rad=0.05)
        exc_inner = dynamics.excitation_probability(pulse, inner, step_rad=0.05)
        assert exc_band.min() >= 0.5
        assert exc_inner.max() <= 0.05

    def test_resonant_ions_stay_put(self, pulse):
        exc0 = dynamics.excitation_probability(pulse, 0.0, step_rad=0.05)
        assert exc0 < 1e-6

    def test_infeasible_request_raises(self):
        # The tomography-amplitude cap cannot clear both thresholds.
        with pytest.raises(SynthesisError):
            synthesize_zero_area(TWO_PI * 500e3, TWO_PI * 25e3, 120e-6,
                                 peak_rabi=PEAK_RABI)

    def test_bad_bands_rejected(self):
        with pytest.raises(ParameterError):
            synthesize_zero_area(TWO_PI * 25e3, TWO_PI * 500e3, 120e-6)
