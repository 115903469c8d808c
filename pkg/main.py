# -*- coding: utf-8 -*-
"""
Passive Localization Simulator - Main Entry Point

Subcommands:
- synth     draw one batch of snapshots and dump its covariances
- spectrum  MVDR / BS / ISR spectra for one batch (CSV + SVG)
- mse       Monte-Carlo MSE at the scenario's operating point
- sweep     Monte-Carlo MSE along num_samples, snr_db or num_antennas
"""

import argparse
import copy
import sys
import time
import traceback
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from core.covariance import block_diag_scm, dump_covariance, scm
from core.env_loader import PROJECT_ROOT, get_env_path
from core.errors import LocalizationError, ValidationError
from core.geometry import build_steering_set
from core.scenario_loader import load_scenario, scenario_trials
from core.scheduler import TrialScheduler
from core.synth import SEED_LIMIT, Scenario, synthesize
from modules import EstimatorRegistry
from modules.base import ESTIMATOR_NAMES
from utils.helpers import format_duration, parse_value_list

DEFAULT_CONFIG = {
    "estimators": {
        "mvdr": {"enabled": True, "loading": "auto"},
        "bs": {"enabled": True, "det_floor": 1e-300},
        "isr": {"enabled": True, "max_iterations": 30, "tol": 1e-3, "prune_threshold": None,
                "update": "posterior", "relaxation": 2.0, "growth_limit": 10.0},
    },
    "harness": {
        "trials": 200,
        "full_scale_trials": 10000,
        "workers": None,
        "plot": True,
        "output_dir": "results",
    },
}

QUIET = False


def log(line: str = "") -> None:
    if not QUIET:
        print(line)


def load_config(path: Optional[str] = None) -> Dict:
    """Load configuration from config.yaml, layered over the built-in defaults."""
    config_path = Path(path) if path else get_env_path("ISR_CONFIG", PROJECT_ROOT / "config.yaml")
    config = copy.deepcopy(DEFAULT_CONFIG)
    try:
        with open(config_path, "r") as f:
            loaded = yaml.safe_load(f) or {}
    except FileNotFoundError:
        log(f"⚠️  {config_path} not found, using defaults")
        return config
    except yaml.YAMLError as e:
        raise ValidationError(f"{config_path}: invalid YAML ({e})")

    if not isinstance(loaded, dict):
        raise ValidationError(f"{config_path}: expected a mapping at top level")
    for section in ("estimators", "harness"):
        for key, value in (loaded.get(section) or {}).items():
            if isinstance(value, dict) and isinstance(config[section].get(key), dict):
                config[section][key].update(value)
            else:
                config[section][key] = value
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Collaborative passive localization simulator (MVDR, beam-space, ISR)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="Scenario YAML file or bundled scenario name")
    common.add_argument("--seed", type=int, help="Override the scenario seed")
    common.add_argument("--out", help="Output directory (default: results/<scenario>/<command>)")
    common.add_argument("--config", help="config.yaml to use (default: ISR_CONFIG or ./config.yaml)")
    common.add_argument("--quiet", action="store_true", help="Only print errors")

    estimating = argparse.ArgumentParser(add_help=False)
    estimating.add_argument("--estimator", action="append", choices=ESTIMATOR_NAMES + ("all",),
                            help="Estimator to run; repeat for several (default: all)")
    estimating.add_argument("--isr-max-iter", type=int, help="ISR iteration cap")
    estimating.add_argument("--isr-tol", type=float, help="ISR relative spectrum-change tolerance")

    monte_carlo = argparse.ArgumentParser(add_help=False)
    monte_carlo.add_argument("--trials", type=int, help="Monte-Carlo trials per point")
    monte_carlo.add_argument("--paper-scale", dest="full_scale", action="store_true",
                             help="Use the scenario's full_scale_trials count")
    monte_carlo.add_argument("--workers", type=int, help="Worker processes (default: ISR_WORKERS or 1)")

    sub.add_parser("synth", parents=[common], help="Synthesize one batch and dump covariances")

    spectrum = sub.add_parser("spectrum", parents=[common, estimating], help="Spectra for one batch")
    spectrum.add_argument("--trial", type=int, default=0, help="Trial index of the batch")
    spectrum.add_argument("--no-plot", action="store_true", help="Skip SVG plots")

    sub.add_parser("mse", parents=[common, estimating, monte_carlo], help="Monte-Carlo MSE")

    sweep = sub.add_parser("sweep", parents=[common, estimating, monte_carlo], help="MSE along one axis")
    sweep.add_argument("--axis", choices=("num_samples", "snr_db", "num_antennas"))
    sweep.add_argument("--values", help="Comma-separated, strictly increasing axis values")
    sweep.add_argument("--no-plot", action="store_true", help="Skip the SVG plot")
    return parser


def prepare_scenario(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        if not 0 <= args.seed < SEED_LIMIT:
            raise ValidationError("--seed must be an unsigned 64-bit integer")
        scenario = scenario.replace(seed=args.seed)
    return scenario


def build_registry(args, config: Dict) -> EstimatorRegistry:
    """Registry with CLI overrides applied on top of config.yaml."""
    overrides = {"isr": {}}
    if args.isr_max_iter is not None:
        overrides["isr"]["max_iterations"] = args.isr_max_iter
    if args.isr_tol is not None:
        overrides["isr"]["tol"] = args.isr_tol
    return EstimatorRegistry(config, overrides, verbose=not QUIET)


def output_dir(args, config: Dict, scenario: Scenario) -> Path:
    if args.out:
        return Path(args.out)
    return Path(config["harness"]["output_dir"]) / (scenario.name or "scenario") / args.command


def resolve_trials(args, config: Dict, scenario: Scenario) -> int:
    if args.trials is not None:
        trials = args.trials
    elif args.full_scale:
        trials = scenario_trials(scenario, True, config["harness"]["full_scale_trials"])
    else:
        trials = scenario_trials(scenario, False, config["harness"]["trials"])
    if trials < 1:
        raise ValidationError("--trials must be at least 1")
    return trials


def cmd_synth(args, config: Dict) -> int:
    from core.export import write_run_record, write_snapshots_csv

    scenario = prepare_scenario(args)
    batch = synthesize(scenario)
    covariances = {"scm": scm(batch), "block_diag_scm": block_diag_scm(batch)}

    out = output_dir(args, config, scenario)
    out.mkdir(parents=True, exist_ok=True)
    write_snapshots_csv(batch, out / "snapshots.csv")
    for name, covariance in covariances.items():
        dump_covariance(covariance, out / f"{name}.bin")
    write_run_record(scenario, {"command": "synth", "trial": 0}, out / "run.yaml")
    log(f"✅ {batch.num_samples} snapshot(s) of length {batch.dimension} written to {out}")
    return 0


def cmd_spectrum(args, config: Dict) -> int:
    from core.export import (format_spectrum_summary, plot_spectrum_svg, write_run_record,
                             write_spectrum_csv)
    from core.metrics import find_peaks

    scenario = prepare_scenario(args)
    estimators = build_registry(args, config).select(args.estimator or ["all"])
    batch = synthesize(scenario, args.trial)
    steering = build_steering_set(scenario.nodes, scenario.grid)

    # Everything is computed before the first file is written.
    spectra = []
    for estimator in estimators:
        started = time.time()
        spectra.append(estimator.estimate(batch, steering, scenario))
        log(f"✅ {estimator.get_name()} spectrum ready ({format_duration(time.time() - started)})")
    peaks = {s.estimator: list(find_peaks(s, max_peaks=max(scenario.num_targets, 1))) for s in spectra}

    out = output_dir(args, config, scenario)
    out.mkdir(parents=True, exist_ok=True)
    plot = config["harness"].get("plot", True) and not args.no_plot
    for spectrum in spectra:
        write_spectrum_csv(spectrum, out / f"spectrum_{spectrum.estimator}.csv")
        if plot:
            plot_spectrum_svg(spectrum, scenario.target_positions, out / f"spectrum_{spectrum.estimator}.svg",
                              f"{spectrum.estimator.upper()} - {scenario.name}")
    (out / "summary.txt").write_text(format_spectrum_summary(spectra, peaks))
    write_run_record(scenario, {"command": "spectrum", "trial": args.trial,
                                "estimators": {e.get_name(): e.config for e in estimators}},
                     out / "run.yaml")
    log(f"✅ {len(spectra)} spectrum file(s) written to {out}")
    return 0


def _run_monte_carlo(args, config: Dict, sweep_mode: bool) -> int:
    from core.export import format_report, plot_mse_svg, write_mse_csv, write_run_record
    from core.metrics import monte_carlo_mse
    from core.sweep import SweepSpec, run_sweep

    scenario = prepare_scenario(args)
    estimators = build_registry(args, config).select(args.estimator or ["all"])
    trials = resolve_trials(args, config, scenario)
    scheduler = TrialScheduler(args.workers, verbose=not QUIET, configured=config["harness"].get("workers"))

    started = time.time()
    if sweep_mode:
        values = parse_value_list(args.values) if args.values else None
        spec = SweepSpec.from_scenario(scenario, estimators, trials, args.axis, values)
        axis = spec.axis
        log(f"🔁 Sweeping {axis} over {spec.values} with {trials} trial(s) per point")
        results = run_sweep(spec, scheduler, verbose=not QUIET)
    else:
        axis = "num_samples"
        log(f"🎲 Running {trials} trial(s) at N_s = {scenario.num_samples}")
        results = [(scenario.num_samples, monte_carlo_mse(scenario, estimators, trials, scheduler))]
    elapsed = time.time() - started

    out = output_dir(args, config, scenario)
    out.mkdir(parents=True, exist_ok=True)
    write_mse_csv(results, axis, out / "mse.csv")
    summary = format_report(results, axis)
    (out / "summary.txt").write_text(summary)
    if sweep_mode and config["harness"].get("plot", True) and not args.no_plot:
        plot_mse_svg(results, axis, out / "mse.svg")
    write_run_record(scenario, {"command": args.command, "trials": trials, "axis": axis,
                                "values": [v for v, _ in results],
                                "estimators": {e.get_name(): e.config for e in estimators}},
                     out / "run.yaml")
    log(summary)
    log(f"✅ Results written to {out} ({format_duration(elapsed)})")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "spectrum": cmd_spectrum,
    "mse": lambda args, config: _run_monte_carlo(args, config, sweep_mode=False),
    "sweep": lambda args, config: _run_monte_carlo(args, config, sweep_mode=True),
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point."""
    global QUIET
    args = build_parser().parse_args(argv)
    QUIET = args.quiet

    try:
        config = load_config(args.config)
        return COMMANDS[args.command](args, config)
    except (LocalizationError, ValueError) as e:
        print(f"❌ ERROR: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("\n🛑 Stopped by user.", file=sys.stderr)
        return 130
    except Exception as e:
        print(f"❌ FATAL ERROR: {e}", file=sys.stderr)
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
