"""Command line front end.

Five experiment subcommands (prepare, tomo, table1, echo, shifts) read
one TOML configuration, run the corresponding pipeline, and drop
plot-ready CSVs plus JSON reports into the output directory, together
with a manifest that pins the resolved configuration and seed.  `rerun`
replays a manifest and reproduces every file byte for byte.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ExperimentConfig, OUTDIR_ENV, config_digest, load_config,
                     write_config_echo)
from .errors import ConfigurationError, IontomoError
from .interactions import (echo_curve, lorentzian_hwhm, sample_shifts,
                           shift_hwhm, write_echo_csv, write_shift_csv)
from .prep import (default_initial_spec, prepare, write_rabi_csv,
                   write_report_json, write_spectral_csv)
from .rng import child_seed, stream
from .tomography import (TargetState, calibrate, estimate_bloch, fidelity,
                         run_tomography, state_to_bloch, table1_experiment,
                         write_fidelity_report_csv, write_fidelity_report_json)
from .ensemble import sample_ensemble


def parse_state_argument(text: str) -> TargetState:
    """Parse "re+imi,re+imi" amplitude pairs, normalizing on ingest."""
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigurationError(
            f'state: expected two comma-separated amplitudes "re+imi,re+imi", got {text!r}')
    try:
        alpha, beta = (complex(p.strip().replace("i", "j")) for p in parts)
    except ValueError:
        raise ConfigurationError(f"state: cannot parse amplitudes in {text!r}") from None
    norm = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
    if norm < 1e-12:
        raise ConfigurationError("state: amplitudes must not both be zero")
    if abs(norm - 1.0) > 1e-6:
        print(f"warning: state norm {norm:.6g} corrected to 1", file=sys.stderr)
    return TargetState.of(alpha, beta)


def _json_out(payload: dict, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_prepare(config: ExperimentConfig, args, outdir: Path):
    plan = config.preparation_plan()
    spec = default_initial_spec(plan, config.seed,
                                n_ions=config["prep.initial_ions"])
    _, report = prepare(spec, plan, seed=config.seed)
    write_report_json(report, outdir / "prep_report.json")
    write_spectral_csv(report, outdir / "spectral_density.csv")
    write_rabi_csv(report, outdir / "rabi_density.csv")
    return ["prep_report.json", "spectral_density.csv", "rabi_density.csv"]


def _run_tomo(config: ExperimentConfig, args, outdir: Path):
    state = parse_state_argument(args.state)
    seed = config.seed
    ensemble = sample_ensemble(config.ensemble_spec(child_seed(seed, "tomo-ensemble")))
    noise = config.noise_model()
    windows = config.measurement_windows()
    kwargs = config.run_kwargs()
    cal = calibrate(ensemble, noise, stream(seed, "tomo-calibrate"), windows,
                    n_shots=config["tomo.n_shots"], **kwargs)
    run = run_tomography(ensemble, state, noise, windows,
                         stream(seed, "tomo-run"), **kwargs)
    est = estimate_bloch(run.pairs, cal)
    run.trace.write_csv(outdir / "tomo_trace.csv")
    _json_out({
        "state": {"alpha": [state.alpha.real, state.alpha.imag],
                  "beta": [state.beta.real, state.beta.imag]},
        "target_bloch": [float(v) for v in state_to_bloch(state)],
        "window_pairs": [[float(i), float(q)] for i, q in run.pairs],
        "calibration_scale": cal.scale,
        "bloch_estimate": [float(v) for v in est.r],
        "residual": est.residual,
        "raw_fidelity": fidelity(state, est, assume_pure=False),
        "normalized_fidelity": fidelity(state, est, assume_pure=True),
    }, outdir / "tomo_result.json")
    return ["tomo_trace.csv", "tomo_result.json"]


def _run_table1(config: ExperimentConfig, args, outdir: Path):
    report = table1_experiment(
        n_ions=config["ensemble.n_ions"],
        linewidth=config["ensemble.width"],
        rabi_spread=config["ensemble.rabi_spread"],
        noise=config.noise_model(),
        seed=config.seed,
        n_shots=config["tomo.n_shots"],
        n_repeats=config["tomo.n_repeats"],
        **config.run_kwargs())
    write_fidelity_report_json(report, outdir / "table1_report.json")
    write_fidelity_report_csv(report, outdir / "table1_report.csv")
    return ["table1_report.json", "table1_report.csv"]


def _run_echo(config: ExperimentConfig, args, outdir: Path):
    seed = config.seed
    ensemble = sample_ensemble(config.ensemble_spec(child_seed(seed, "echo-ensemble")))
    rows = echo_curve(ensemble, config.interaction_model(), config.tau_grid(),
                      seed=child_seed(seed, "echo-curve"))
    write_echo_csv(rows, outdir / "echo_curve.csv")
    return ["echo_curve.csv"]


def _run_shifts(config: ExperimentConfig, args, outdir: Path):
    model = config.interaction_model()
    shifts = sample_shifts(model, config["shifts.n_targets"],
                           seed=child_seed(config.seed, "shifts"))
    write_shift_csv(shifts, outdir / "shift_histogram.csv")
    _json_out({
        "n_targets": config["shifts.n_targets"],
        "hwhm_hz": shift_hwhm(shifts),
        "median_hz": float(np.median(shifts)),
        "analytic_hwhm_hz": None if model.isotropic else lorentzian_hwhm(model),
    }, outdir / "shift_stats.json")
    return ["shift_histogram.csv", "shift_stats.json"]


_RUNNERS = {
    "prepare": _run_prepare,
    "tomo": _run_tomo,
    "table1": _run_table1,
    "echo": _run_echo,
    "shifts": _run_shifts,
}


def _resolve_outdir(config: ExperimentConfig, args) -> Path:
    outdir = Path(args.outdir) if args.outdir else Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def _execute(name: str, config: ExperimentConfig, args, outdir: Path,
             extra_args: dict):
    """Run one subcommand and write the full reproducible record."""
    write_config_echo(config, outdir / "config_resolved.json")
    outputs = ["config_resolved.json"] + _RUNNERS[name](config, args, outdir)
    _json_out({
        "subcommand": name,
        "args": extra_args,
        "seed": config.seed,
        "config": config.values,
        "config_sha256": config_digest(config),
        "versions": {"iontomo": __version__,
                     "numpy": np.__version__,
                     "python": platform.python_version()},
        "outputs": sorted(outputs),
    }, outdir / "manifest.json")
    print(f"{name}: wrote {len(outputs) + 1} files to {outdir}")
    return 0


def _dispatch(args) -> int:
    if args.command == "rerun":
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        config = ExperimentConfig(manifest["config"], source=str(args.manifest))
        name = manifest["subcommand"]
        if name not in _RUNNERS:
            raise ConfigurationError(f"{args.manifest}: unknown subcommand {name!r}")
        extra = manifest.get("args", {})
        ns = argparse.Namespace(**extra)
        outdir = Path(args.outdir) if args.outdir else Path(config.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        return _execute(name, config, ns, outdir, extra)

    config = load_config(args.config)
    if args.seed is not None:
        config = ExperimentConfig({**config.values, "seed": args.seed},
                                  config.source)
    extra = {"state": args.state} if args.command == "tomo" else {}
    outdir = _resolve_outdir(config, args)
    return _execute(args.command, config, args, outdir, extra)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iontomo",
        description="Spin-ensemble tomography and echo experiments.")
    parser.add_argument("--version", action="version",
                        version=f"iontomo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="TOML configuration (default: built-in defaults)")
    common.add_argument("--seed", type=int, metavar="N",
                        help="override the configured seed")
    common.add_argument("--outdir", metavar="DIR",
                        help=f"output directory (default: config, then ${OUTDIR_ENV}, then .)")
    common.add_argument("--workers", type=int, default=1, metavar="N",
                        help="scheduling hint; outputs never depend on it")

    sub.add_parser("prepare", parents=[common],
                   help="run the four-stage spectral isolation pipeline")
    tomo = sub.add_parser("tomo", parents=[common],
                          help="prepare one state and reconstruct it")
    tomo.add_argument("--state", required=True, metavar="AMPS",
                      help='two complex amplitudes, e.g. "0.7071+0i,0.7071+0i"')
    sub.add_parser("table1", parents=[common],
                   help="fidelity benchmark over the seven reference states")
    sub.add_parser("echo", parents=[common],
                   help="perturbed-echo amplitude versus delay")
    sub.add_parser("shifts", parents=[common],
                   help="Monte Carlo dipolar shift distribution")
    rerun = sub.add_parser("rerun",
                           help="replay a manifest and reproduce its outputs")
    rerun.add_argument("manifest", help="manifest.json from a previous run")
    rerun.add_argument("--outdir", metavar="DIR",
                       help="output directory (default: the manifest's config)")
    rerun.add_argument("--workers", type=int, default=1, metavar="N",
                       help="scheduling hint; outputs never depend on it")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return _dispatch(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IontomoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
