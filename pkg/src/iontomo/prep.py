"""Hole-burning pipeline that isolates a narrow, uniform qubit ensemble.

Four Monte Carlo stages act on an ensemble in sequence: a wide trench
burn shelves everything near the laser, a repump paints a Lorentzian
antihole back into the trench center, repeated zero-area pulses shave
the antihole down to a steep-edged 50 kHz feature, and a train of
nominal 2pi pulses discards ions whose drive strength is off nominal.
Each stage only ever deactivates or reactivates ions; none of them
invents new ones, so active counts fall monotonically after the repump.

All stages model the slow timescale of the real sequence (milliseconds
between pulses) as complete decay: every ion enters every pulse in its
electronic ground state.  Shelved ions park their population in the
uncoupled ground levels and stop talking to the detection chain.
"""
import csv
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dynamics import excitation_probability
from .ensemble import (ACTIVE_LEVEL, EnsembleSpec, IonEnsemble, Rectangular,
                       sample_ensemble)
from .errors import EstimationError, ParameterError
from .pulses import synthesize_zero_area
from .rng import child_seed, stream
from .units import TWO_PI

# Spectral region the simulation covers: the narrowing pulse can address
# ions out to its outer band edge, so the default initial ensemble stays
# inside twice that.  Ions further out are burned and stay dark at the
# residual level, which the detection windows cannot resolve.
_GRID_DENSE_STOP = 60e3
_GRID_DENSE_STEP = 0.5e3
_GRID_COARSE_STEP = 5e3
_GRID_SCALES = (0.7, 0.85, 1.0, 1.15, 1.3)
_GRID_STEP_RAD = 0.05


@dataclass(frozen=True)
class PreparationPlan:
    """Knobs for the four-stage isolation pipeline.

    Frequencies are plain Hz.  The RF sweep range and the auxiliary
    beam offset are carried as metadata for reports; the simulation
    works in the laser's rotating frame, where both are absorbed into
    a single acceptance window for the repump.
    """

    trench_width: float = 2e6
    repump_rf_center: float = 34.5e6
    repump_rf_halfwidth: float = 1.0e6
    aux_offset: float = 95.9e6
    antihole_fwhm: float = 300e3
    band_outer: float = 500e3
    band_inner: float = 25e3
    narrowing_rounds: int = 20
    narrowing_duration: float = 120e-6
    select_pulse_duration: float = 4e-6
    select_n_pulses: int = 10
    select_delay: float = 8e-3
    branching: tuple = (1 / 3, 1 / 3, 1 / 3)
    burn_residual: float = 1e-3

    def __post_init__(self):
        for name in ("trench_width", "repump_rf_halfwidth", "antihole_fwhm",
                     "band_outer", "band_inner", "narrowing_duration",
                     "select_pulse_duration", "select_delay"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.band_inner >= self.band_outer:
            raise ParameterError("band_inner must sit below band_outer")
        if self.narrowing_rounds < 0:
            raise ParameterError("narrowing_rounds must be non-negative")
        if self.select_n_pulses < 1:
            raise ParameterError("select_n_pulses must be at least 1")
        if len(self.branching) != 3 or any(b < 0 for b in self.branching):
            raise ParameterError("branching needs three non-negative ratios")
        if abs(sum(self.branching) - 1.0) > 1e-9:
            raise ParameterError("branching ratios must sum to 1")
        if not 0.0 <= self.burn_residual < 1.0:
            raise ParameterError("burn_residual must be in [0, 1)")

    @property
    def shelve_fraction(self) -> float:
        """Probability that an excited ion decays away from the qubit level."""
        return 1.0 - self.branching[ACTIVE_LEVEL]

    @property
    def repump_acceptance(self) -> float:
        # Hz.  Capped inside the narrowing band so that every ion the
        # repump reactivates can later be addressed by the zero-area
        # pulse; the tail beyond it would survive narrowing untouched.
        return 0.9 * self.band_outer


def _shelve(ens: IonEnsemble, mask: np.ndarray, plan: PreparationPlan):
    """Move the marked ions' population to the uncoupled ground levels."""
    if not np.any(mask):
        return
    others = [k for k in range(3) if k != ACTIVE_LEVEL]
    weights = np.array([plan.branching[k] for k in others], dtype=float)
    total = weights.sum()
    weights = weights / total if total > 0 else np.full(len(others), 0.5)
    ens.active[mask] = False
    ens.populations[mask] = 0.0
    for k, w in zip(others, weights):
        ens.populations[mask, k] = w
    ens.bloch[mask] = (0.0, 0.0, -1.0)


def burn_trench(ensemble: IonEnsemble, plan: PreparationPlan,
                rng: np.random.Generator) -> IonEnsemble:
    """Shelve (almost) every ion within half a trench width of the laser.

    Ions survive the burn with probability `burn_residual`; anything
    outside the trench is untouched.
    """
    ens = ensemble.copy()
    half = math.pi * plan.trench_width  # rad/s: half of the full width
    hit = ens.active & (np.abs(ens.detuning) < half)
    burned = hit & (rng.random(len(ens)) < 1.0 - plan.burn_residual)
    _shelve(ens, burned, plan)
    return ens


def repump_antihole(ensemble: IonEnsemble, plan: PreparationPlan,
                    rng: np.random.Generator) -> IonEnsemble:
    """Pump shelved ions near line center back into the qubit level.

    Acceptance is a Lorentzian of FWHM `antihole_fwhm` (probability 1/2
    at one half-width), truncated at the acceptance cap.  Reactivated
    ions return with all population in the coupled level, at rest.
    """
    ens = ensemble.copy()
    hwhm = math.pi * plan.antihole_fwhm  # rad/s
    p = 1.0 / (1.0 + (ens.detuning / hwhm) ** 2)
    p[np.abs(ens.detuning) > TWO_PI * plan.repump_acceptance] = 0.0
    back = ~ens.active & (rng.random(len(ens)) < p)
    if np.any(back):
        ens.active[back] = True
        ens.populations[back] = 0.0
        ens.populations[back, ACTIVE_LEVEL] = 1.0
        ens.bloch[back] = (0.0, 0.0, -1.0)
    return ens


@lru_cache(maxsize=4)
def _excitation_table(band_outer: float, band_inner: float, duration: float):
    """Zero-area pulse excitation vs (|detuning|, rabi_scale), tabulated.

    One synthesis plus one batched propagation, cached per band layout.
    The grid is dense through the feature edge and coarse across the
    stopband; queries interpolate bilinearly and clamp at the borders.
    """
    pulse = synthesize_zero_area(TWO_PI * band_outer, TWO_PI * band_inner,
                                 duration)
    dense = np.arange(0.0, _GRID_DENSE_STOP + _GRID_DENSE_STEP / 2,
                      _GRID_DENSE_STEP)
    coarse_stop = 1.2 * band_outer + 2 * _GRID_COARSE_STEP
    coarse = np.arange(_GRID_DENSE_STOP + _GRID_COARSE_STEP, coarse_stop,
                       _GRID_COARSE_STEP)
    det_hz = np.concatenate([dense, coarse])
    scales = np.array(_GRID_SCALES)
    table = excitation_probability(pulse, TWO_PI * det_hz[:, None], scales,
                                   step_rad=_GRID_STEP_RAD)
    return det_hz, scales, table


def _narrowing_excitation(plan: PreparationPlan, detuning: np.ndarray,
                          rabi_scale: np.ndarray) -> np.ndarray:
    """Per-ion excitation under one zero-area pulse (detuning in rad/s)."""
    det_hz, scales, table = _excitation_table(plan.band_outer,
                                              plan.band_inner,
                                              plan.narrowing_duration)
    q = np.abs(detuning) / TWO_PI
    cols = np.empty((q.size, scales.size))
    for k in range(scales.size):
        cols[:, k] = np.interp(q, det_hz, table[:, k])
    s = np.clip(rabi_scale, scales[0], scales[-1])
    j = np.clip(np.searchsorted(scales, s, side="right") - 1, 0,
                scales.size - 2)
    frac = (s - scales[j]) / (scales[j + 1] - scales[j])
    rows = np.arange(q.size)
    return cols[rows, j] * (1.0 - frac) + cols[rows, j + 1] * frac


def narrowing_survival(plan: PreparationPlan, detuning_hz) -> np.ndarray:
    """Probability of staying active through all narrowing rounds.

    Deterministic companion to `apply_narrowing` for a nominal-strength
    ion: (1 - shelve_fraction * excitation)^rounds.
    """
    det = TWO_PI * np.asarray(detuning_hz, dtype=float)
    exc = _narrowing_excitation(plan, det, np.ones(det.shape))
    return (1.0 - plan.shelve_fraction * exc) ** plan.narrowing_rounds


def apply_narrowing(ensemble: IonEnsemble, plan: PreparationPlan,
                    rng: np.random.Generator) -> IonEnsemble:
    """Shave the antihole flanks with repeated zero-area pulses.

    Each round excites every active ion with its pulse-band probability
    and shelves the excited ones with probability `shelve_fraction`.
    The rounds are spaced far enough apart that each starts from the
    ground state, so one excitation table serves all of them.
    """
    ens = ensemble.copy()
    idx = np.flatnonzero(ens.active)
    if idx.size == 0 or plan.narrowing_rounds == 0:
        return ens
    p_shelve = plan.shelve_fraction * _narrowing_excitation(
        plan, ens.detuning[idx], ens.rabi_scale[idx])
    alive = np.ones(idx.size, dtype=bool)
    for _ in range(plan.narrowing_rounds):
        alive &= rng.random(idx.size) >= p_shelve
    _shelve(ens, idx[~alive], plan)
    return ens


def rabi_postselect(ensemble: IonEnsemble, plan: PreparationPlan,
                    rng: np.random.Generator) -> IonEnsemble:
    """Discard ions whose effective pulse area strays from 2pi.

    A square pulse of nominal area 2pi leaves an on-scale ion in the
    ground state; an off-scale or detuned ion keeps some excitation
    and risks shelving on decay.  The inter-pulse delay is long against
    the excited-state lifetime, so every pulse starts from the ground
    state and one closed-form excitation serves the whole train.
    """
    ens = ensemble.copy()
    idx = np.flatnonzero(ens.active)
    if idx.size == 0:
        return ens
    omega0 = TWO_PI / plan.select_pulse_duration
    omega = ens.rabi_scale[idx] * omega0
    g = np.hypot(omega, ens.detuning[idx])
    half_angle = g * plan.select_pulse_duration / 2.0
    p_exc = np.where(g > 0.0, (omega / g) ** 2 * np.sin(half_angle) ** 2, 0.0)
    p_shelve = plan.shelve_fraction * p_exc
    alive = np.ones(idx.size, dtype=bool)
    for _ in range(plan.select_n_pulses):
        alive &= rng.random(idx.size) >= p_shelve
    _shelve(ens, idx[~alive], plan)
    ens.reset_to_ground()
    return ens


def spectral_density(ensemble: IonEnsemble, bin_width_hz: float = 2e3,
                     span_hz: float = 60e3):
    """Active-ion density vs detuning: (bin centers in kHz, ions per kHz)."""
    if bin_width_hz <= 0 or span_hz <= 0:
        raise ParameterError("histogram bins must have positive size")
    edges = np.arange(-span_hz, span_hz + bin_width_hz / 2, bin_width_hz)
    det_hz = ensemble.detuning[ensemble.active] / TWO_PI
    counts, _ = np.histogram(det_hz, bins=edges)
    centers = (edges[:-1] + edges[1:]) / 2.0
    return centers / 1e3, counts / (bin_width_hz / 1e3)


def rabi_density(ensemble: IonEnsemble, bin_width: float = 0.02,
                 lo: float = 0.65, hi: float = 1.35):
    """Active-ion density vs drive scale: (bin centers, ions per unit scale)."""
    if bin_width <= 0 or hi <= lo:
        raise ParameterError("histogram bins must have positive size")
    edges = np.arange(lo, hi + bin_width / 2, bin_width)
    scales = ensemble.rabi_scale[ensemble.active]
    counts, _ = np.histogram(scales, bins=edges)
    centers = (edges[:-1] + edges[1:]) / 2.0
    return centers, counts / bin_width


def feature_width(centers, density, height_fraction: float) -> float:
    """Full width of a peaked histogram at a fraction of its maximum.

    Scans inward from both ends for the outermost crossings of the
    threshold and interpolates linearly between bins, which tolerates
    noise dips inside the feature.
    """
    centers = np.asarray(centers, dtype=float)
    density = np.asarray(density, dtype=float)
    if not 0.0 < height_fraction < 1.0:
        raise ParameterError("height_fraction must be in (0, 1)")
    peak = density.max() if density.size else 0.0
    if peak <= 0.0:
        raise EstimationError("no density to measure a width from")
    thr = height_fraction * peak
    above = np.flatnonzero(density >= thr)
    i0, i1 = above[0], above[-1]

    def cross(inside, outside):
        d_in, d_out = density[inside], density[outside]
        if d_in == d_out:
            return centers[inside]
        t = (thr - d_out) / (d_in - d_out)
        return centers[outside] + t * (centers[inside] - centers[outside])

    left = centers[0] if i0 == 0 else cross(i0, i0 - 1)
    right = centers[-1] if i1 == len(density) - 1 else cross(i1, i1 + 1)
    return float(right - left)


@dataclass(frozen=True)
class PreparationReport:
    """Stage-by-stage attrition counts and final feature histograms."""

    initial_count: int
    active_after_burn: int
    active_after_repump: int
    active_after_narrowing: int
    active_after_selection: int
    spectral_bins_khz: np.ndarray
    spectral_density: np.ndarray
    rabi_bins: np.ndarray
    rabi_density: np.ndarray
    surviving_rabi_halfwidth: float

    def to_dict(self) -> dict:
        return {
            "counts": {
                "initial": self.initial_count,
                "after_burn": self.active_after_burn,
                "after_repump": self.active_after_repump,
                "after_narrowing": self.active_after_narrowing,
                "after_selection": self.active_after_selection,
            },
            "spectral_bins_khz": [float(v) for v in self.spectral_bins_khz],
            "spectral_density_per_khz": [float(v) for v in self.spectral_density],
            "rabi_bins": [float(v) for v in self.rabi_bins],
            "rabi_density": [float(v) for v in self.rabi_density],
            "surviving_rabi_halfwidth": float(self.surviving_rabi_halfwidth),
        }


def default_initial_spec(plan: PreparationPlan, seed: int,
                         n_ions: int = 40_000) -> EnsembleSpec:
    """Uniform line of fresh ions covering the narrowing-addressable region,
    with a 30% drive-strength spread."""
    width = min(plan.trench_width, 2.0 * plan.band_outer)
    return EnsembleSpec(n_ions, Rectangular(TWO_PI * width), rabi_spread=0.3,
                        seed=child_seed(seed, "prep-initial"))


def prepare(spec: EnsembleSpec | None = None,
            plan: PreparationPlan | None = None, seed: int = 0):
    """Run the full pipeline; returns (active ensemble, report).

    Each stage draws from its own tagged stream, so reordering one
    stage's internals never perturbs another's outcome.
    """
    plan = plan if plan is not None else PreparationPlan()
    if spec is None:
        spec = default_initial_spec(plan, seed)
    ens0 = sample_ensemble(spec)
    e_burn = burn_trench(ens0, plan, stream(seed, "prep-burn"))
    e_pump = repump_antihole(e_burn, plan, stream(seed, "prep-repump"))
    e_narrow = apply_narrowing(e_pump, plan, stream(seed, "prep-narrow"))
    e_select = rabi_postselect(e_narrow, plan, stream(seed, "prep-select"))

    bins_khz, dens = spectral_density(e_select)
    r_bins, r_dens = rabi_density(e_select)
    try:
        half = feature_width(r_bins, r_dens, 0.5) / 2.0
    except EstimationError:
        half = float("nan")
    report = PreparationReport(
        initial_count=len(ens0),
        active_after_burn=e_burn.n_active,
        active_after_repump=e_pump.n_active,
        active_after_narrowing=e_narrow.n_active,
        active_after_selection=e_select.n_active,
        spectral_bins_khz=bins_khz,
        spectral_density=dens,
        rabi_bins=r_bins,
        rabi_density=r_dens,
        surviving_rabi_halfwidth=half,
    )
    return e_select.active_subset(), report


def write_report_json(report: PreparationReport, path):
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def write_spectral_csv(report: PreparationReport, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["detuning_khz", "active_density"])
        for c, d in zip(report.spectral_bins_khz, report.spectral_density):
            w.writerow([repr(float(c)), repr(float(d))])


def write_rabi_csv(report: PreparationReport, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["rabi_scale", "active_density"])
        for c, d in zip(report.rabi_bins, report.rabi_density):
            w.writerow([repr(float(c)), repr(float(d))])
