"""Spin-ensemble state preparation, tomography, and echo experiments.

The package simulates an inhomogeneously broadened ensemble of
three-level ions driven on one optical transition: spectral isolation
of a narrow subensemble, shaped-pulse state preparation, phase-sensitive
detection of its free-induction and echo emission, Bloch-vector
reconstruction from the emission quadratures, and dipolar frequency
shifts between nearby excited ions.
"""
from .detection import (IQTrace, MeasurementWindows, NoiseModel,
                        default_windows, integrate_window, synthesize_trace)
from .dynamics import (GROUND, Damping, excitation_probability, free_evolve,
                       propagate_const, propagate_shaped, rotate)
from .ensemble import (ACTIVE_LEVEL, EnsembleSpec, IonEnsemble, Lorentzian,
                       Rectangular, TrenchAntihole, ensemble_mean_bloch,
                       sample_ensemble)
from .errors import (CalibrationError, CapabilityError, ConfigurationError,
                     EstimationError, IontomoError, ParameterError,
                     SynthesisError)
from .interactions import (EchoExperiment, InteractionModel, echo_curve,
                           lorentzian_hwhm, pair_shift, run_echo,
                           sample_shifts, scale_shifts_to_hwhm, shift_hwhm)
from .prep import (PreparationPlan, PreparationReport, apply_narrowing,
                   burn_trench, default_initial_spec, feature_width,
                   narrowing_survival, prepare, rabi_density, rabi_postselect,
                   repump_antihole, spectral_density)
from .pulses import (PEAK_RABI, SincDiffPulse, SquarePulse, TabulatedPulse,
                     Timeline, TimelineEvent, square_pulse,
                     synthesize_zero_area, tomography_timeline)
from .rng import child_seed, stream
from .tomography import (BlochEstimate, ScaleCalibration, TargetState,
                         calibrate, estimate_bloch, fidelity,
                         prep_pulse_for_state, run_tomography, state_to_bloch,
                         table1_experiment, table1_states)
from .units import TWO_PI, hz_to_rad, parse_frequency, parse_time, rad_to_hz

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
