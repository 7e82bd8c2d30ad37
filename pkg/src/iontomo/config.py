"""Configuration documents for the command line tools.

A run is described by a TOML file of dotted keys.  Frequencies are
strings with an explicit unit suffix ("50khz") and become angular
rad/s on parsing; times ("70us") become seconds.  Unknown keys are
rejected, missing ones take the documented defaults, so an empty file
is a complete configuration.
"""
from __future__ import annotations

import difflib
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .detection import MeasurementWindows, NoiseModel
from .ensemble import EnsembleSpec, Lorentzian, Rectangular
from .errors import ConfigurationError, ParameterError
from .interactions import FULL_DENSITY_NM3, InteractionModel
from .prep import PreparationPlan
from .units import hz_to_rad, parse_frequency, parse_time, rad_to_hz

OUTDIR_ENV = "IONTOMO_OUTDIR"


def _int(minimum=None):
    def parse(value, key):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise ConfigurationError(f"{key}: must be >= {minimum}, got {value}")
        return value
    return parse


def _number(minimum=None):
    def parse(value, key):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{key}: expected a number, got {value!r}")
        if minimum is not None and value < minimum:
            raise ConfigurationError(f"{key}: must be >= {minimum}, got {value}")
        return float(value)
    return parse


def _bool(value, key):
    if not isinstance(value, bool):
        raise ConfigurationError(f"{key}: expected true or false, got {value!r}")
    return value


def _str(value, key):
    if not isinstance(value, str):
        raise ConfigurationError(f"{key}: expected a string, got {value!r}")
    return value


def _choice(*options):
    def parse(value, key):
        if value not in options:
            raise ConfigurationError(
                f"{key}: expected one of {', '.join(options)}, got {value!r}")
        return value
    return parse


def _span(value, key):
    if not (isinstance(value, list) and len(value) == 2):
        raise ConfigurationError(
            f"{key}: expected a two-element array of times, got {value!r}")
    start, end = (parse_time(v, key) for v in value)
    if not start < end:
        raise ConfigurationError(f"{key}: window start must precede its end")
    return (start, end)


@dataclass(frozen=True)
class _Key:
    parse: object
    default: object


# Defaults are stored already resolved (rad/s, seconds), matching what
# the parsers produce, so a loaded document and the default table merge
# without a second conversion pass.
SCHEMA = {
    "seed": _Key(_int(0), 0),
    "output.dir": _Key(_str, ""),

    "ensemble.n_ions": _Key(_int(1), 10_000),
    "ensemble.profile": _Key(_choice("rectangular", "lorentzian"), "rectangular"),
    "ensemble.width": _Key(parse_frequency, hz_to_rad(50e3)),
    "ensemble.rabi_spread": _Key(_number(0), 0.1),

    "prep.initial_ions": _Key(_int(1), 40_000),
    "prep.trench_width": _Key(parse_frequency, hz_to_rad(2e6)),
    "prep.repump.rf_center": _Key(parse_frequency, hz_to_rad(34.5e6)),
    "prep.repump.rf_halfwidth": _Key(parse_frequency, hz_to_rad(1.0e6)),
    "prep.repump.aux_offset": _Key(parse_frequency, hz_to_rad(95.9e6)),
    "prep.repump.antihole_fwhm": _Key(parse_frequency, hz_to_rad(300e3)),
    "prep.narrowing.band_outer": _Key(parse_frequency, hz_to_rad(500e3)),
    "prep.narrowing.band_inner": _Key(parse_frequency, hz_to_rad(25e3)),
    "prep.narrowing.rounds": _Key(_int(0), 20),
    "prep.narrowing.duration": _Key(parse_time, 120e-6),
    "prep.rabi_select.pulse_duration": _Key(parse_time, 4e-6),
    "prep.rabi_select.n_pulses": _Key(_int(1), 10),
    "prep.rabi_select.delay": _Key(parse_time, 8e-3),

    "noise.shot_scale_jitter": _Key(_number(0), 0.1),
    "noise.additive_rms": _Key(_number(0), 0.0),

    "timeline.gap": _Key(parse_time, 70e-6),
    "timeline.total": _Key(parse_time, 200e-6),
    "timeline.sample_dt": _Key(parse_time, 1e-7),
    "timeline.recovery": _Key(parse_time, 10e-6),

    "windows.w1": _Key(_span, None),
    "windows.w2": _Key(_span, None),
    "windows.w3": _Key(_span, None),

    "tomo.n_shots": _Key(_int(1), 10),
    "tomo.n_repeats": _Key(_int(1), 3),

    "interactions.reference_shift": _Key(parse_frequency, hz_to_rad(1e9)),
    "interactions.reference_radius_nm": _Key(_number(0), 2.5),
    "interactions.excited_fraction": _Key(_number(0), 0.5),
    "interactions.spectral_fraction": _Key(_number(0), 1e-6),
    "interactions.n_perturbers": _Key(_int(1), 64),
    "interactions.isotropic": _Key(_bool, False),

    "echo.tau_min": _Key(parse_time, 5e-6),
    "echo.tau_max": _Key(parse_time, 400e-6),
    "echo.n_points": _Key(_int(1), 40),

    "shifts.n_targets": _Key(_int(1), 100_000),
}


def _flatten(table, prefix=""):
    for name, value in table.items():
        key = f"{prefix}{name}"
        if isinstance(value, dict):
            yield from _flatten(value, f"{key}.")
        else:
            yield key, value


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully-resolved configuration: every schema key has a value."""

    values: dict = field(repr=False)
    source: str = "<defaults>"

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def output_dir(self) -> str:
        configured = self.values["output.dir"]
        return configured or os.environ.get(OUTDIR_ENV, ".")

    def ensemble_spec(self, seed: int) -> EnsembleSpec:
        width = self.values["ensemble.width"]
        profile = (Rectangular(width) if self.values["ensemble.profile"]
                   == "rectangular" else Lorentzian(width))
        return EnsembleSpec(self.values["ensemble.n_ions"], profile,
                            self.values["ensemble.rabi_spread"], seed=seed)

    def preparation_plan(self) -> PreparationPlan:
        v = self.values
        return PreparationPlan(
            trench_width=rad_to_hz(v["prep.trench_width"]),
            repump_rf_center=rad_to_hz(v["prep.repump.rf_center"]),
            repump_rf_halfwidth=rad_to_hz(v["prep.repump.rf_halfwidth"]),
            aux_offset=rad_to_hz(v["prep.repump.aux_offset"]),
            antihole_fwhm=rad_to_hz(v["prep.repump.antihole_fwhm"]),
            band_outer=rad_to_hz(v["prep.narrowing.band_outer"]),
            band_inner=rad_to_hz(v["prep.narrowing.band_inner"]),
            narrowing_rounds=v["prep.narrowing.rounds"],
            narrowing_duration=v["prep.narrowing.duration"],
            select_pulse_duration=v["prep.rabi_select.pulse_duration"],
            select_n_pulses=v["prep.rabi_select.n_pulses"],
            select_delay=v["prep.rabi_select.delay"])

    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.values["noise.shot_scale_jitter"],
                          self.values["noise.additive_rms"])

    def interaction_model(self) -> InteractionModel:
        v = self.values
        return InteractionModel.from_reference(
            rad_to_hz(v["interactions.reference_shift"]),
            v["interactions.reference_radius_nm"],
            excited_fraction=v["interactions.excited_fraction"],
            perturber_density=v["interactions.spectral_fraction"] * FULL_DENSITY_NM3,
            n_perturbers=v["interactions.n_perturbers"],
            isotropic=v["interactions.isotropic"])

    def measurement_windows(self) -> MeasurementWindows | None:
        spans = [self.values[k] for k in ("windows.w1", "windows.w2", "windows.w3")]
        given = [s is not None for s in spans]
        if not any(given):
            return None
        if not all(given):
            raise ConfigurationError(
                "windows: give all three of w1, w2, w3 or none of them")
        return MeasurementWindows(*(tuple(s) for s in spans))

    def tau_grid(self) -> np.ndarray:
        v = self.values
        if not v["echo.tau_min"] < v["echo.tau_max"]:
            raise ConfigurationError("echo: tau_min must be below tau_max")
        return np.linspace(v["echo.tau_min"], v["echo.tau_max"], v["echo.n_points"])

    def run_kwargs(self) -> dict:
        """Timeline keywords shared by the tomography entry points."""
        return {"gap": self.values["timeline.gap"],
                "total": self.values["timeline.total"],
                "sample_dt": self.values["timeline.sample_dt"],
                "recovery_time": self.values["timeline.recovery"]}


def _validate(config: ExperimentConfig):
    """Build every domain object once so bad values fail at load time."""
    try:
        config.ensemble_spec(0)
        config.preparation_plan()
        config.noise_model()
        config.interaction_model()
        config.measurement_windows()
        config.tau_grid()
    except ParameterError as exc:
        raise ConfigurationError(f"{config.source}: {exc}") from exc


def load_config(path=None) -> ExperimentConfig:
    """Parse, validate, and fill defaults; None means all defaults."""
    values = {key: spec.default for key, spec in SCHEMA.items()}
    source = "<defaults>"
    if path is not None:
        source = str(path)
        with open(path, "rb") as fh:
            try:
                document = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigurationError(f"{source}: {exc}") from exc
        for key, raw in _flatten(document):
            if key not in SCHEMA:
                near = difflib.get_close_matches(key, SCHEMA, n=1)
                hint = f" (did you mean '{near[0]}'?)" if near else ""
                raise ConfigurationError(f"{source}: unknown key '{key}'{hint}")
            try:
                values[key] = SCHEMA[key].parse(raw, key)
            except ConfigurationError as exc:
                raise ConfigurationError(f"{source}: {exc}") from exc
    config = ExperimentConfig(values, source)
    _validate(config)
    return config


def config_digest(config: ExperimentConfig) -> str:
    """Content hash of the resolved values, independent of the source file."""
    canonical = json.dumps(config.values, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_config_echo(config: ExperimentConfig, path):
    """Serialize the resolved values (internal units) for the run record."""
    with open(path, "w") as fh:
        json.dump(config.values, fh, indent=2, sort_keys=True)
        fh.write("\n")
