"""Excitation-induced dipolar frequency shifts and the perturbed echo.

Exciting one spectral spike shifts the transition frequencies of ions
in another through the change in permanent electric dipole moment, an
r^-3 interaction with the static-dipole angular kernel.  The Monte
Carlo here scatters excited perturbers around each target ion at the
configured density and sums the pair shifts; the echo experiment then
asks when those shifts survive rephasing.

A shift switched on before the rephasing pulse is echoed away exactly;
switched on after it, each ion keeps an uncompensated phase shift*tau
and the ensemble echo decays like the characteristic function of the
shift distribution.  Pulses are treated as instantaneous rotations:
the point under study is interferometry of the free-evolution phase,
not pulse imperfection, which other modules cover.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import GROUND, free_evolve, rotate
from .ensemble import ACTIVE_LEVEL, IonEnsemble
from .errors import EstimationError, ParameterError
from .rng import child_seed, stream
from .units import TWO_PI

MEAN_SPACING_NM = 2.5
FULL_DENSITY_NM3 = MEAN_SPACING_NM ** -3
SPIKE_FRACTION = 1e-6
SPIKE_DENSITY_NM3 = FULL_DENSITY_NM3 * SPIKE_FRACTION
TIMINGS = ("none", "after_half", "after_pi")


@dataclass(frozen=True)
class InteractionModel:
    """Dipolar coupling strength and the perturber population it acts on.

    `coupling` is the pair-shift magnitude prefactor in Hz*nm^3, anchored
    so that a perturber at the mean ion spacing shifts its neighbor by
    a GHz-scale amount.  `perturber_density` counts ions of the perturbing
    spectral spike per nm^3; only the excited fraction of them shifts
    anything.  Set `isotropic` to drop the angular kernel for sensitivity
    studies.
    """

    coupling: float = 1e9 * MEAN_SPACING_NM ** 3
    excited_fraction: float = 0.5
    perturber_density: float = SPIKE_DENSITY_NM3
    n_perturbers: int = 64
    isotropic: bool = False

    def __post_init__(self):
        if self.coupling <= 0:
            raise ParameterError("coupling must be positive")
        if not 0.0 <= self.excited_fraction <= 1.0:
            raise ParameterError("excited_fraction must be in [0, 1]")
        if self.perturber_density <= 0:
            raise ParameterError("perturber_density must be positive")
        if self.n_perturbers < 1:
            raise ParameterError("n_perturbers must be at least 1")

    @classmethod
    def from_reference(cls, shift_ref_hz: float, r_ref_nm: float, **kw):
        """Anchor the coupling so |shift| at r_ref on the equator is shift_ref."""
        return cls(coupling=shift_ref_hz * r_ref_nm ** 3, **kw)

    @property
    def excited_density(self) -> float:
        return self.perturber_density * self.excited_fraction

    @property
    def sphere_radius_nm(self) -> float:
        """Radius holding n_perturbers excited ions at the configured density."""
        if self.excited_density == 0.0:
            return math.inf
        return (3.0 * self.n_perturbers
                / (4.0 * math.pi * self.excited_density)) ** (1.0 / 3.0)


def pair_shift(model: InteractionModel, r_nm, cos_theta):
    """Shift (Hz) from one excited perturber at distance r, polar angle theta."""
    r_nm = np.asarray(r_nm, dtype=float)
    kernel = 1.0 if model.isotropic else 1.0 - 3.0 * np.asarray(cos_theta) ** 2
    return model.coupling * kernel / r_nm ** 3


def sample_shifts(model: InteractionModel, n_targets: int,
                  n_perturbers_per_target: int | None = None, seed: int = 0,
                  *, position_scale: float = 1.0) -> np.ndarray:
    """Total dipolar shift (Hz) for each target ion, one row per target.

    Perturbers are drawn uniformly inside the density-matched sphere,
    independently per target (dilute limit).  `position_scale` rescales
    every separation after the draw, so the same seed probes the r^-3
    law exactly.
    """
    if n_targets < 1:
        raise ParameterError("n_targets must be at least 1")
    n_per = model.n_perturbers if n_perturbers_per_target is None \
        else n_perturbers_per_target
    if n_per < 1:
        raise ParameterError("n_perturbers_per_target must be at least 1")
    if position_scale <= 0:
        raise ParameterError("position_scale must be positive")
    if model.excited_density == 0.0:
        return np.zeros(n_targets)
    rng = stream(seed, "dipolar-shifts")
    radius = (3.0 * n_per / (4.0 * math.pi * model.excited_density)) ** (1 / 3)
    u = rng.random((n_targets, n_per))
    cos_theta = rng.uniform(-1.0, 1.0, (n_targets, n_per))
    # Uniform in the ball; clip the measure-zero origin draw.
    r = radius * position_scale * np.maximum(u, 1e-300) ** (1.0 / 3.0)
    return np.asarray(pair_shift(model, r, cos_theta)).sum(axis=1)


def shift_hwhm(shifts) -> float:
    """Half-width at half-maximum, estimated as the median |shift|.

    Exact for a Lorentzian, and far more stable than a histogram fit
    on the heavy-tailed distributions the r^-3 kernel produces.
    """
    shifts = np.asarray(shifts, dtype=float)
    if shifts.size == 0:
        raise EstimationError("no shifts to estimate a width from")
    return float(np.median(np.abs(shifts)))


def lorentzian_hwhm(model: InteractionModel) -> float:
    """Dilute-limit analytic HWHM (Hz) of the dipolar shift distribution.

    The r^-3 sum over a Poisson gas converges to a Lorentzian with
    HWHM = (8 pi^2 / (9 sqrt 3)) * coupling * excited_density.  Only
    valid for the angular kernel; the isotropic variant is a one-sided
    stable law with no comparable width.
    """
    if model.isotropic:
        raise ParameterError("analytic width applies to the dipolar kernel only")
    return (8.0 * math.pi ** 2 / (9.0 * math.sqrt(3.0)) * model.coupling
            * model.excited_density)


def scale_shifts_to_hwhm(shifts, target_hz: float) -> np.ndarray:
    """Rescale a shift sample so its measured HWHM equals target_hz."""
    if target_hz <= 0:
        raise ParameterError("target HWHM must be positive")
    shifts = np.asarray(shifts, dtype=float)
    return shifts * (target_hz / shift_hwhm(shifts))


@dataclass(frozen=True)
class EchoExperiment:
    """One echo sequence: pi/2 -- tau -- pi -- tau -- read, plus a shift.

    `perturb_timing` says when the perturbing pulse fires: never, right
    after the pi/2 (shift active for both halves, so it rephases), or
    right after the pi (second half only, so it survives to the echo).
    The perturber spike's spectral offset is metadata; only its
    excitation matters dynamically.
    """

    tau: float
    perturb_timing: str = "none"
    perturber_offset: float = 5e6

    def __post_init__(self):
        if self.tau <= 0:
            raise ParameterError("tau must be positive")
        if self.perturb_timing not in TIMINGS:
            raise ParameterError(
                f"perturb_timing must be one of {TIMINGS}, "
                f"got {self.perturb_timing!r}")


def run_echo(ensemble: IonEnsemble, experiment: EchoExperiment,
             model: InteractionModel | None = None, seed: int = 0,
             shifts=None) -> float:
    """Echo amplitude |I + iQ| at time 2 tau, in summed-ion units.

    Shifts come from `shifts` when given, else are sampled from `model`;
    a timing of "none" needs neither.
    """
    sub = ensemble.active_subset()
    n = len(sub)
    if n == 0:
        raise EstimationError("no active ions to echo")
    timing = experiment.perturb_timing
    if timing == "none":
        delta = np.zeros(n)
    else:
        if shifts is None:
            if model is None:
                raise ParameterError("need a model or explicit shifts")
            shifts = sample_shifts(model, n, seed=seed)
        shifts = np.asarray(shifts, dtype=float)
        if shifts.shape != (n,):
            raise ParameterError("need one shift per active ion")
        delta = TWO_PI * shifts
    w = sub.populations[:, ACTIVE_LEVEL]
    b = rotate(np.broadcast_to(GROUND, (n, 3)), 0.0, np.pi / 2)
    first = sub.detuning + (delta if timing == "after_half" else 0.0)
    b = free_evolve(b, first, experiment.tau)
    b = rotate(b, 0.0, np.pi)
    second = sub.detuning + (delta if timing != "none" else 0.0)
    b = free_evolve(b, second, experiment.tau)
    c = b[:, 0] + 1j * b[:, 1]
    return float(abs(np.dot(w, c)))


def echo_curve(ensemble: IonEnsemble, model: InteractionModel, tau_grid,
               seed: int = 0) -> list:
    """Echo amplitude vs tau for all three perturbation timings.

    Each tau draws a fresh shift realization shared by the three
    timings of its row.  Returns rows of
    {tau_us, amp_none, amp_after_half, amp_after_pi}.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.size == 0:
        raise ParameterError("tau grid must not be empty")
    if np.any(tau_grid <= 0) or np.any(np.diff(tau_grid) <= 0):
        raise ParameterError("tau grid must be positive and increasing")
    n = ensemble.n_active
    if n == 0:
        raise EstimationError("no active ions to echo")
    rows = []
    for k, tau in enumerate(tau_grid):
        shifts = sample_shifts(model, n, seed=child_seed(seed, "echo-tau", k))
        row = {"tau_us": float(tau * 1e6)}
        for timing in TIMINGS:
            amp = run_echo(ensemble, EchoExperiment(float(tau), timing),
                           shifts=None if timing == "none" else shifts)
            row[f"amp_{timing}"] = amp
        rows.append(row)
    return rows


def write_echo_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tau_us", "amp_none", "amp_after_half", "amp_after_pi"])
        for row in rows:
            w.writerow([repr(float(row["tau_us"])),
                        repr(float(row["amp_none"])),
                        repr(float(row["amp_after_half"])),
                        repr(float(row["amp_after_pi"]))])


def write_shift_csv(shifts, path, bin_width_hz: float = 100.0,
                    span_hz: float = 10e3):
    """Histogram the shift sample to CSV as (shift_hz, density per Hz)."""
    if bin_width_hz <= 0 or span_hz <= 0:
        raise ParameterError("histogram bins must have positive size")
    shifts = np.asarray(shifts, dtype=float)
    edges = np.arange(-span_hz, span_hz + bin_width_hz / 2, bin_width_hz)
    counts, _ = np.histogram(shifts, bins=edges)
    centers = (edges[:-1] + edges[1:]) / 2.0
    density = counts / (shifts.size * bin_width_hz)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["shift_hz", "density"])
        for c, d in zip(centers, density):
            w.writerow([repr(float(c)), repr(float(d))])
