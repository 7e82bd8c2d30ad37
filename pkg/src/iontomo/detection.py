"""Phase-sensitive detection of the ensemble's coherent emission.

The detected quantity is the demodulated transverse polarization: with
the conventions in `dynamics`, an ion at Bloch vector (x, y, z) radiates
an in-phase amplitude proportional to -x and a quadrature amplitude
proportional to +y.  Amplitudes add coherently, each ion weighted by its
population in the drive-coupled level, so traces are linear in the
number of emitting ions.  Heterodyne carrier and propagation effects are
abstracted away; the synthesizer emits baseband I/Q directly.

The detector saturates while pulse light is on and takes a while to
come back; both intervals are modeled as a hard blanking mask with the
samples zeroed, default recovery 10 us.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dynamics import propagate_const, propagate_shaped
from .ensemble import ACTIVE_LEVEL, IonEnsemble
from .errors import ConfigurationError, EstimationError, ParameterError
from .pulses import SquarePulse, Timeline

RECOVERY_TIME = 10e-6
SAMPLE_DT = 1e-7


@dataclass(frozen=True)
class NoiseModel:
    """Detection imperfections.

    shot_scale_jitter is the fractional standard deviation of a single
    multiplicative factor drawn per trace (shot-to-shot variation in the
    number of participating ions scales the whole signal).
    additive_noise_rms adds white Gaussian noise per sample.
    """

    shot_scale_jitter: float = 0.1
    additive_noise_rms: float = 0.0

    def __post_init__(self):
        if self.shot_scale_jitter < 0 or self.additive_noise_rms < 0:
            raise ParameterError("noise strengths must be >= 0")

    @property
    def is_quiet(self) -> bool:
        return self.shot_scale_jitter == 0 and self.additive_noise_rms == 0


@dataclass(frozen=True)
class IQTrace:
    """Uniformly sampled I/Q emission amplitudes with a blanking mask."""

    times: np.ndarray
    i: np.ndarray
    q: np.ndarray
    blanked: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.i) == len(self.q) == len(self.blanked) == n and n >= 2):
            raise ParameterError("trace arrays must share one length >= 2")
        steps = np.diff(self.times)
        if np.any(np.abs(steps - steps[0]) > 1e-9 * steps[0]):
            raise ParameterError("trace grid must be uniform")

    @property
    def sample_dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_us", "I", "Q", "blanked"])
            for t, i, q, m in zip(self.times, self.i, self.q, self.blanked):
                w.writerow([repr(float(t * 1e6)), repr(float(i)),
                            repr(float(q)), int(m)])

    @staticmethod
    def read_csv(path) -> "IQTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["t_us", "I", "Q", "blanked"]:
            raise ConfigurationError(f"{path}: not a trace CSV")
        body = np.array([[float(c) for c in row] for row in rows[1:]])
        return IQTrace(body[:, 0] * 1e-6, body[:, 1], body[:, 2],
                       body[:, 3] != 0)


@dataclass(frozen=True)
class MeasurementWindows:
    """Three named integration windows, each a (start, end) pair in s.

    w1 sits after the preparation pulse (free-induction signal), w2 just
    before the final half-pi pulse where the echo rephases, w3 after it.
    """

    w1: tuple
    w2: tuple
    w3: tuple

    def __post_init__(self):
        spans = [self.w1, self.w2, self.w3]
        for start, end in spans:
            if not start < end:
                raise ParameterError("each window needs start < end")
        for (_, a_end), (b_start, _) in zip(spans, spans[1:]):
            if b_start < a_end:
                raise ParameterError("windows must be disjoint and ordered")

    def spans(self) -> tuple:
        return (self.w1, self.w2, self.w3)


def _through_pulse(state, pulse, detuning, rabi_scale):
    if isinstance(pulse, SquarePulse):
        return propagate_const(state, pulse.amplitude * rabi_scale,
                               pulse.phase, detuning, pulse.duration)
    return propagate_shaped(state, pulse, detuning, rabi_scale)


def synthesize_trace(ensemble: IonEnsemble, timeline: Timeline,
                     noise: NoiseModel | None = None, rng=None, *,
                     sample_dt: float = SAMPLE_DT,
                     recovery_time: float = RECOVERY_TIME) -> IQTrace:
    """Propagate the ensemble through a timeline and record its emission.

    Between pulses every ion just precesses at its own detuning, so the
    trace walks the sample grid with one cached phasor per ion; pulses
    are crossed in a single exact (square) or stepped (shaped) call.
    Samples during pulses and the recovery tail after each are blanked
    and zeroed.  Blanking intervals are half-open: a sample exactly at
    blanking end is live.

    A noise model with any nonzero strength needs `rng`; the draw order
    is fixed (scale, I noise, Q noise) so seeded traces reproduce.
    """
    if len(ensemble) == 0 or ensemble.n_active == 0:
        raise EstimationError("cannot synthesize a trace without active ions")
    if noise is not None and not noise.is_quiet and rng is None:
        raise ParameterError("a noise model with nonzero strength needs an rng")

    n = int(round(timeline.duration / sample_dt)) + 1
    t = np.arange(n) * sample_dt
    eps = 1e-3 * sample_dt
    blanked = np.zeros(n, dtype=bool)
    for ev in timeline.events:
        blanked |= (t > ev.start - eps) & (t < ev.end + recovery_time - eps)

    sub = ensemble.active_subset()
    weights = sub.populations[:, ACTIVE_LEVEL].astype(complex)
    det = sub.detuning
    state = sub.bloch.copy()
    emission = np.zeros(n, dtype=complex)  # sum of weight * (x + iy)

    def record_gap(t0, t1):
        """Free evolution over [t0, t1); record samples on the grid there."""
        c = state[:, 0] + 1j * state[:, 1]
        k0 = max(int(np.ceil((t0 - eps) / sample_dt)), 0)
        k1 = min(int(np.ceil((t1 - eps) / sample_dt)), n)
        if k0 < k1:
            rot = np.exp(1j * det * sample_dt)
            c *= np.exp(1j * det * (k0 * sample_dt - t0))
            for k in range(k0, k1):
                emission[k] = weights @ c
                c *= rot
            # c is now at grid time k1*dt, possibly past t1; rewinding a
            # fraction of a step is exact for free evolution.
            c *= np.exp(1j * det * (t1 - k1 * sample_dt))
        else:
            c *= np.exp(1j * det * (t1 - t0))
        state[:, 0], state[:, 1] = c.real, c.imag

    cur = 0.0
    for ev in timeline.events:
        record_gap(cur, ev.start)
        state[:] = _through_pulse(state, ev.pulse, det, sub.rabi_scale)
        cur = ev.end
    record_gap(cur, timeline.duration + sample_dt / 2)  # include last sample

    scale = 1.0
    i_sig = -emission.real
    q_sig = emission.imag
    if noise is not None:
        if noise.shot_scale_jitter > 0:
            scale = 1.0 + noise.shot_scale_jitter * rng.standard_normal()
        i_sig = i_sig * scale
        q_sig = q_sig * scale
        if noise.additive_noise_rms > 0:
            i_sig = i_sig + noise.additive_noise_rms * rng.standard_normal(n)
            q_sig = q_sig + noise.additive_noise_rms * rng.standard_normal(n)
    i_sig[blanked] = 0.0
    q_sig[blanked] = 0.0
    return IQTrace(t, i_sig, q_sig, blanked)


def integrate_window(trace: IQTrace, window) -> tuple:
    """Arithmetic mean of (I, Q) over the samples inside [start, end]."""
    start, end = window
    half = trace.sample_dt / 2
    mask = (trace.times >= start - half * 1e-3) & (trace.times <= end + half * 1e-3)
    if not np.any(mask):
        raise ConfigurationError(f"window [{start}, {end}] holds no samples")
    if np.any(trace.blanked[mask]):
        raise ConfigurationError(f"window [{start}, {end}] overlaps a blanked region")
    return float(trace.i[mask].mean()), float(trace.q[mask].mean())


def default_windows(timeline: Timeline, recovery_time: float = RECOVERY_TIME,
                    length: float = 8e-6,
                    sample_dt: float = SAMPLE_DT) -> MeasurementWindows:
    """Integration windows for a three-pulse tomography timeline.

    All three windows cover the same span of dephasing offsets relative
    to their emission reference (the preparation-pulse center for w1,
    the echo time for w2, the readout-pulse center for w3), so an
    inhomogeneously broadened ensemble attenuates each channel by the
    same factor and a single calibration scalar stays valid for every
    window.  The common start offset is the smallest that keeps every
    window clear of blanking.
    """
    if len(timeline.events) != 3:
        raise ConfigurationError("default windows need a three-pulse timeline")
    prep, mid, read = timeline.events
    if abs(mid.pulse.area() - np.pi) > 1e-6 or abs(read.pulse.area() - np.pi / 2) > 1e-6:
        raise ConfigurationError(
            "default windows need a pi rephasing pulse and a half-pi readout")
    t_prep = prep.start + prep.pulse.duration / 2
    t_mid = mid.start + mid.pulse.duration / 2
    t_read = read.start + read.pulse.duration / 2
    t_echo = 2 * t_mid - t_prep

    # The sample sitting exactly on a pulse edge is blanked, so the
    # pre-readout constraint needs one sample of standoff; the two
    # post-pulse constraints do not, recovery already ends half-open.
    offset = max(prep.pulse.duration / 2 + recovery_time,
                 read.pulse.duration / 2 + recovery_time,
                 t_echo - read.start + sample_dt)
    windows = MeasurementWindows(
        w1=(t_prep + offset, t_prep + offset + length),
        w2=(t_echo - offset - length, t_echo - offset),
        w3=(t_read + offset, t_read + offset + length),
    )
    if windows.w1[1] > mid.start:
        raise ConfigurationError("pulse gap too short for the post-prep window")
    if windows.w2[0] < mid.end + recovery_time:
        raise ConfigurationError("pulse gap too short for the echo window")
    if windows.w3[1] > timeline.duration:
        raise ConfigurationError("timeline too short for the readout window")
    return windows
