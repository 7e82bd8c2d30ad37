"""Ion ensembles: per-ion static parameters plus Bloch state.

An ion is characterized by its optical detuning from the laser (rad/s),
a dimensionless Rabi-amplitude scale capturing its position in the beam
profile, ground hyperfine populations over the three doublets
(|1/2|, |3/2|, |5/2|), and its current Bloch vector.  Only the |5/2|
doublet couples to the drive; ions shelved elsewhere are spectators and
carry ``active = False``.

Ensembles are stored as flat arrays (one row per ion), which is what
every propagation and detection routine consumes.  A single `Ion` view
is available for inspection and tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EstimationError, ParameterError
from .rng import stream

# Indices into the population array.
LEVEL_12, LEVEL_32, LEVEL_52 = 0, 1, 2
ACTIVE_LEVEL = LEVEL_52


@dataclass(frozen=True)
class Ion:
    """Read-only view of a single ensemble row."""

    detuning: float
    rabi_scale: float
    populations: tuple
    bloch: tuple
    active: bool

    def __post_init__(self):
        if self.rabi_scale < 0:
            raise ParameterError("rabi_scale must be >= 0")
        pops = np.asarray(self.populations, dtype=float)
        if pops.shape != (3,) or np.any(pops < -1e-12) or pops.sum() > 1 + 1e-9:
            raise ParameterError("populations must be three non-negative numbers summing to <= 1")
        if abs(np.linalg.norm(self.bloch)) > 1 + 1e-9:
            raise ParameterError("Bloch vector must have norm <= 1")


# --- detuning profiles -------------------------------------------------

@dataclass(frozen=True)
class Rectangular:
    """Uniform detuning density over [-width/2, +width/2] (width in rad/s)."""

    width: float

    def sample(self, rng, n: int) -> np.ndarray:
        return self.width * (rng.random(n) - 0.5)


@dataclass(frozen=True)
class Lorentzian:
    """Lorentzian detuning density of the given FWHM (rad/s)."""

    fwhm: float

    def sample(self, rng, n: int) -> np.ndarray:
        return 0.5 * self.fwhm * np.tan(np.pi * (rng.random(n) - 0.5))


@dataclass(frozen=True)
class TrenchAntihole:
    """An emptied trench holding a narrow Lorentzian feature at its center.

    Models the outcome of hole burning directly, without running the
    preparation pipeline: a fraction of the ions sit in a truncated
    Lorentzian antihole, the rest in the flat background just outside
    the trench edges (out to one trench width each side).  Useful for
    studying trench-edge ringing in detected traces.
    """

    trench_width: float
    antihole_fwhm: float
    antihole_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.antihole_fraction <= 1.0:
            raise ParameterError("antihole_fraction must be within [0, 1]")

    def sample(self, rng, n: int) -> np.ndarray:
        u = rng.random(n)
        v = rng.random(n)
        in_hole = rng.random(n) < self.antihole_fraction
        # Inverse CDF of a Lorentzian truncated at the trench edges.
        half = np.arctan(self.trench_width / self.antihole_fwhm)
        hole = 0.5 * self.antihole_fwhm * np.tan(half * (2 * u - 1))
        # Flat background on [edge, 3*edge] either side, edge = trench/2.
        edge = self.trench_width / 2
        mag = edge + 2 * edge * v
        background = np.where(rng.random(n) < 0.5, -mag, mag)
        return np.where(in_hole, hole, background)


@dataclass(frozen=True)
class EnsembleSpec:
    """Recipe for drawing an ensemble.

    rabi_spread is the fractional half-width of a uniform rabi_scale
    distribution centered on 1 (0.1 means scales in [0.9, 1.1]).
    """

    n_ions: int
    profile: object = field(default_factory=lambda: Rectangular(0.0))
    rabi_spread: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_ions < 1:
            raise ParameterError("n_ions must be >= 1")
        if not 0.0 <= self.rabi_spread < 1.0:
            raise ParameterError("rabi_spread must be in [0, 1)")


class IonEnsemble:
    """Array-of-rows ion container; all arrays share the leading axis."""

    def __init__(self, detuning, rabi_scale, populations=None, bloch=None, active=None):
        self.detuning = np.asarray(detuning, dtype=float).copy()
        n = self.detuning.size
        self.rabi_scale = np.asarray(rabi_scale, dtype=float).copy()
        if self.rabi_scale.shape != (n,):
            raise ParameterError("rabi_scale must match detuning length")
        if populations is None:
            populations = np.zeros((n, 3))
            populations[:, ACTIVE_LEVEL] = 1.0
        self.populations = np.asarray(populations, dtype=float).copy()
        if bloch is None:
            bloch = np.tile([0.0, 0.0, -1.0], (n, 1))
        self.bloch = np.asarray(bloch, dtype=float).copy()
        self.active = (np.ones(n, dtype=bool) if active is None
                       else np.asarray(active, dtype=bool).copy())
        for arr, shape in ((self.populations, (n, 3)), (self.bloch, (n, 3)),
                           (self.active, (n,))):
            if arr.shape != shape:
                raise ParameterError(f"ensemble array shape mismatch: {arr.shape} != {shape}")

    def __len__(self):
        return self.detuning.size

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))

    def ion(self, i: int) -> Ion:
        return Ion(
            detuning=float(self.detuning[i]),
            rabi_scale=float(self.rabi_scale[i]),
            populations=tuple(self.populations[i]),
            bloch=tuple(self.bloch[i]),
            active=bool(self.active[i]),
        )

    def active_subset(self) -> "IonEnsemble":
        m = self.active
        return IonEnsemble(self.detuning[m], self.rabi_scale[m],
                           self.populations[m], self.bloch[m], self.active[m])

    def copy(self) -> "IonEnsemble":
        return IonEnsemble(self.detuning, self.rabi_scale,
                           self.populations, self.bloch, self.active)

    def reset_to_ground(self):
        self.bloch[:] = (0.0, 0.0, -1.0)


def sample_ensemble(spec: EnsembleSpec) -> IonEnsemble:
    """Draw an ensemble from its spec; fixed seed gives identical arrays.

    Detunings and Rabi scales come from separate tagged streams, so
    neither draw perturbs the other or any later stage of a pipeline
    that keys its own stream off the same seed.
    """
    det = spec.profile.sample(stream(spec.seed, "detunings"), spec.n_ions)
    scales = 1.0 + spec.rabi_spread * (
        2.0 * stream(spec.seed, "rabi_scales").random(spec.n_ions) - 1.0)
    return IonEnsemble(det, scales)


def ensemble_mean_bloch(ensemble: IonEnsemble, weights=None) -> np.ndarray:
    """Weighted mean Bloch vector over active ions.

    Default weight is each ion's population in the drive-coupled level.
    Raises EstimationError when the total weight vanishes (no active
    ions, or all weights zero).
    """
    m = ensemble.active
    if weights is None:
        w = ensemble.populations[m, ACTIVE_LEVEL]
    else:
        w = np.asarray(weights, dtype=float)[m]
    total = w.sum()
    if not total > 0:
        raise EstimationError("mean Bloch vector undefined: total weight is zero")
    return (ensemble.bloch[m] * w[:, None]).sum(axis=0) / total
