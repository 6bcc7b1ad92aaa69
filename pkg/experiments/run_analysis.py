"""
Command-line front end: bode, margins, compensate, transient, inject, import-measure, cap-sweep.

    python experiments/run_analysis.py margins --config configs/internal_supply.json --assert-stable
"""

import logging
import os
import sys
import tempfile
from dataclasses import replace

import transformers
from transformers import HfArgumentParser

root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(root)
from models import *
from evaluations.gen_report import emit, report_lines, write_key_values
from evaluations.injection_eval import measure_loop_gain
from evaluations.stability import (
    Band,
    bode_from_response,
    margins,
    margins_of,
    meets_targets,
    pole_stable,
    sweep_band,
)
from experiments.compensator import capacitance_sweep, compare_designs, design_lead
from experiments.dataset import AnalysisConfig, import_measured, load_config
from experiments.transient import ringing_metrics, simulate_step
from experiments.utils import capacitance_plot, comparison_plot

transformers.logging.set_verbosity_error()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

COMMAND_ARGUMENTS = {
    "bode": (AnalysisArguments, MarginArguments),
    "margins": (AnalysisArguments, MarginArguments),
    "compensate": (AnalysisArguments, CompensationArguments),
    "transient": (AnalysisArguments, TransientArguments),
    "inject": (AnalysisArguments, InjectionArguments),
    "import-measure": (AnalysisArguments, MarginArguments),
    "cap-sweep": (AnalysisArguments, SweepArguments),
}


def output_path(args: AnalysisArguments):
    if args.out is None:
        return None
    return os.path.splitext(args.out)[0] + "." + args.format


def resolve_band(config: AnalysisConfig, args: AnalysisArguments) -> Band:
    band = config.sweep if config is not None else Band()
    try:
        return Band(
            args.fmin if args.fmin is not None else band.f_min_hz,
            args.fmax if args.fmax is not None else band.f_max_hz,
            args.ppd if args.ppd is not None else band.points_per_decade,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def require_config(args: AnalysisArguments) -> AnalysisConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    return load_config(args.config)


def deliver(artifact, kind, args, report=None, design=None, title=None, stdout_lines=None):
    path = output_path(args)
    if path is None:
        if args.format == "svg":
            raise ConfigError("--format svg needs --out")
        if args.format == "csv" and kind != "report":
            with tempfile.TemporaryDirectory() as tmp:
                tmp_path = emit(artifact, kind, "csv", os.path.join(tmp, "out.csv"))
                with open(tmp_path) as f:
                    sys.stdout.write(f.read())
            return
        print("\n".join(stdout_lines if stdout_lines is not None else report_lines(report, design, title)))
        return
    emit(artifact, kind, args.format, path, report=report, design=design, title=title)
    logger.info(f"wrote {path}")


def run_bode(args, margin_args):
    config = require_config(args)
    loop = loop_gain(config.model(compensated=margin_args.compensated))
    bode = sweep_band(loop, resolve_band(config, args))
    report = margins(bode)
    report.pole_stable = pole_stable(loop)
    deliver(bode, "bode", args, report=report, title="loop gain")
    return EXIT_OK


def run_margins(args, margin_args):
    config = require_config(args)
    loop = loop_gain(config.model(compensated=margin_args.compensated))
    band = resolve_band(config, args)
    report = margins_of(loop, band)
    if args.format == "txt" or args.out is None:
        deliver(report, "report", args, report=report, title=config.name)
    else:
        deliver(sweep_band(loop, band), "bode", args, report=report, title=config.name)
    if margin_args.assert_stable and not meets_targets(report):
        logger.error(
            f"margins below target: GM {report.gain_margin_db:.2f} dB, PM {report.phase_margin_deg:.2f} deg"
        )
        return EXIT_ASSERTION
    return EXIT_OK


def run_compensate(args, comp_args):
    config = require_config(args)
    band = resolve_band(config, args)
    design = design_lead(
        config.model(compensated=False),
        c_candidates=comp_args.c_candidates or None,
        f0=comp_args.f0,
        series=comp_args.series,
        band=band,
        show_progress=True,
    )
    logger.info("margins before and after the lead:\n" + compare_designs(design.uncompensated, design.achieved).to_string())
    if args.format == "txt" or args.out is None:
        deliver(design.achieved, "report", args, report=design.achieved, design=design, title="lead compensation")
        return EXIT_OK

    uncompensated = config.model(compensated=False)
    after = sweep_band(loop_gain(with_lead(uncompensated, design.lead)), band)
    if args.format == "svg":
        path = output_path(args)
        before = sweep_band(loop_gain(uncompensated), band)
        label = f"R_comp={design.r_comp_ohms:g} ohm, C_comp={design.c_comp_farads:g} F"
        comparison_plot([before, after], ["uncompensated", label], figure_path=os.path.dirname(os.path.abspath(path)),
                        figure_name=os.path.basename(path), figure_title="lead compensation")
        logger.info(f"wrote {path}")
    else:
        deliver(after, "bode", args, report=design.achieved)
    return EXIT_OK


def run_transient(args, step_args):
    config = require_config(args)
    step = config.load_step
    changes = {}
    if step_args.step_amps is not None:
        changes["i_after_amps"] = step.i_before_amps + step_args.step_amps
    if step_args.duration is not None:
        changes["duration_s"] = step_args.duration
    if step_args.dt is not None:
        changes["dt_s"] = step_args.dt
    try:
        step = replace(step, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    z_cl = closed_loop_output_impedance(config.model(compensated=step_args.compensated))
    result = simulate_step(z_cl, step)
    freq, decay = ringing_metrics(result)
    metrics = {
        "delta_amps": step.delta_amps,
        "peak_droop_v": result.peak_droop_v,
        "steady_state_droop_v": result.steady_state_droop_v,
        "ringing_freq_hz": result.ringing_freq_hz,
        "zero_crossings": len(result.crossings_s),
        "dominant_freq_hz": freq,
        "decay_per_cycle": decay,
        "settling_time_s": result.settling_time_s,
        "overshoot_ratio": result.overshoot_ratio,
    }
    path = output_path(args)
    if args.format == "txt" and path is not None:
        write_key_values(path, metrics, title="load step")
    elif args.format == "txt":
        print("\n".join(f"{key}={value}" for key, value in metrics.items()))
    else:
        deliver(result, "waveform", args, title="load step")
    return EXIT_OK


def run_inject(args, inj_args):
    config = require_config(args)
    model = config.model()
    band = resolve_band(config, args)
    response = measure_loop_gain(model, band.grid(), inj_args.amplitude)
    bode = bode_from_response(response)
    report = margins(bode)
    deliver(bode, "bode", args, report=report, title="injected loop gain")
    return EXIT_OK


def run_import(args, margin_args):
    if args.input is None:
        raise ConfigError("--input is required for import-measure")
    measured, report = import_measured(args.input)
    if args.format == "txt":
        deliver(report, "report", args, report=report, title=args.input)
    else:
        deliver(measured.bode, "bode", args, report=report, title=args.input)
    if margin_args.assert_stable and not meets_targets(report):
        return EXIT_ASSERTION
    return EXIT_OK


def run_cap_sweep(args, sweep_args):
    config = require_config(args)
    frame = capacitance_sweep(config.template, config.sense, sweep_args.capacitances or None,
                              band=resolve_band(config, args), show_progress=True)
    path = output_path(args)
    if path is None:
        print(frame.to_string(index=False))
    elif args.format == "svg":
        capacitance_plot(frame, figure_path=os.path.dirname(os.path.abspath(path)), figure_name=os.path.basename(path))
    elif args.format == "csv":
        frame.to_csv(path, index=False)
    else:
        with open(path, "w") as f:
            f.write(frame.to_string(index=False) + "\n")
    return EXIT_OK


COMMANDS = {
    "bode": run_bode,
    "margins": run_margins,
    "compensate": run_compensate,
    "transient": run_transient,
    "inject": run_inject,
    "import-measure": run_import,
    "cap-sweep": run_cap_sweep,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        level=logging.INFO,
    )
    if not argv or argv[0] not in COMMANDS:
        print(f"usage: run_analysis.py {{{','.join(COMMANDS)}}} [options]", file=sys.stderr)
        return EXIT_CONFIG

    command, rest = argv[0], argv[1:]
    parser = HfArgumentParser(COMMAND_ARGUMENTS[command])
    try:
        args, extra = parser.parse_args_into_dataclasses(args=rest)
    except ValueError as exc:
        logger.error(str(exc))
        return EXIT_CONFIG
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    try:
        return COMMANDS[command](args, extra)
    except ConfigError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return EXIT_CONFIG
    except ValueError as exc:
        logger.error(f"invalid input: {exc}")
        return EXIT_CONFIG
    except LoopAnalysisError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
