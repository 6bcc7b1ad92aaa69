import argparse
import math
import os
import sys

import numpy as np
import pandas as pd
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import seaborn as sns

root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(root)
from models import IoError
from evaluations.stability import BodeData, StabilityReport
from evaluations.task_config import BODE_CSV_HEADER, WAVEFORM_CSV_HEADER

EMIT_KINDS = ("report", "bode", "waveform")


def _number(x) -> str:
    # shortest decimal that reads back to the same double
    return repr(float(x))


def _check_target(path):
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise IoError(f"output directory {directory} does not exist")


def report_lines(report: StabilityReport, design=None, title=None):
    lines = []
    if title:
        lines.append(f"# {title}")
    lines += [
        f"gain_margin_db={_number(report.gain_margin_db)}",
        f"phase_margin_deg={_number(report.phase_margin_deg)}",
        "gain_crossover_hz=" + ",".join(_number(f) for f in report.gain_crossover_hz),
        "phase_crossover_hz=" + ",".join(_number(f) for f in report.phase_crossover_hz),
        "worst_case_gm_at_hz=" + ("" if report.worst_case[0] is None else _number(report.worst_case[0])),
        "worst_case_pm_at_hz=" + ("" if report.worst_case[1] is None else _number(report.worst_case[1])),
        f"pole_stable={report.pole_stable}",
        f"marginal={report.marginal}",
    ]
    if design is not None:
        lines += [
            f"f0_hz={_number(design.f0_hz)}",
            f"r_comp_ohms={_number(design.r_comp_ohms)}",
            f"c_comp_farads={_number(design.c_comp_farads)}",
            f"r_int_ohms={_number(design.r_int_ohms)}",
            f"normalized_margin={_number(design.objective)}",
        ]
        if design.uncompensated is not None:
            lines += [
                f"uncompensated_gain_margin_db={_number(design.uncompensated.gain_margin_db)}",
                f"uncompensated_phase_margin_deg={_number(design.uncompensated.phase_margin_deg)}",
            ]
    return lines


def write_report(path, report: StabilityReport, design=None, title=None, extra=None):
    if report is None:
        raise IoError("no report to write")
    _check_target(path)
    lines = report_lines(report, design, title)
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return path


def write_key_values(path, values, title=None):
    if not values:
        raise IoError("nothing to write")
    _check_target(path)
    lines = [f"# {title}"] if title else []
    for key, value in values.items():
        lines.append(f"{key}={_number(value) if isinstance(value, (float, np.floating)) else value}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return path


def bode_frame(bode: BodeData) -> pd.DataFrame:
    return pd.DataFrame({
        "freq_hz": [_number(x) for x in bode.freqs_hz],
        "mag_db": [_number(x) for x in bode.mag_db],
        "phase_deg": [_number(x) for x in bode.phase_deg],
    })[BODE_CSV_HEADER]


def write_bode_csv(path, bode: BodeData):
    if bode is None or len(bode) < 2:
        raise IoError("refusing to write an empty sweep")
    _check_target(path)
    bode_frame(bode).to_csv(path, index=False)
    return path


def write_waveform_csv(path, result):
    if result is None or len(result.times_s) == 0:
        raise IoError("refusing to write an empty waveform")
    _check_target(path)
    frame = pd.DataFrame({
        "time_s": [_number(x) for x in result.times_s],
        "v_deviation": [_number(x) for x in result.v_deviation_volts],
    })[WAVEFORM_CSV_HEADER]
    frame.to_csv(path, index=False)
    return path


def write_bode_svg(path, bode: BodeData, report: StabilityReport = None, title=None):
    if bode is None or len(bode) < 2:
        raise IoError("refusing to plot an empty sweep")
    _check_target(path)
    plt.clf()
    sns.set_theme(style="whitegrid")
    fig, (ax_mag, ax_phase) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    ax_mag.semilogx(bode.freqs_hz, bode.mag_db)
    ax_phase.semilogx(bode.freqs_hz, bode.phase_deg)
    ax_mag.axhline(0.0, color="gray", linewidth=0.8)
    ax_phase.axhline(-180.0, color="gray", linewidth=0.8)
    if report is not None:
        for f in report.gain_crossover_hz:
            ax_mag.axvline(f, color="tab:red", linestyle="--", linewidth=0.8)
        for f in report.phase_crossover_hz:
            ax_phase.axvline(f, color="tab:red", linestyle="--", linewidth=0.8)
    ax_mag.set_ylabel("magnitude (dB)")
    ax_phase.set_ylabel("phase (deg)")
    ax_phase.set_xlabel("frequency (Hz)")
    if title is not None:
        ax_mag.set_title(title)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def write_waveform_svg(path, result, title=None):
    if result is None or len(result.times_s) == 0:
        raise IoError("refusing to plot an empty waveform")
    _check_target(path)
    plt.clf()
    sns.set_theme(style="whitegrid")
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(np.asarray(result.times_s) * 1e3, np.asarray(result.v_deviation_volts) * 1e3)
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("droop (mV)")
    if title is not None:
        ax.set_title(title)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def emit(artifact, kind, fmt, path, report=None, design=None, title=None):
    """
    Writes `artifact` to `path`.

    kind is one of report / bode / waveform, fmt one of txt / csv / svg. A bode or
    waveform asked for as txt gets its margins report when one is supplied.
    """
    if kind not in EMIT_KINDS:
        raise ValueError(f"unknown artifact kind {kind}")
    if kind == "report" or fmt == "txt":
        return write_report(path, artifact if kind == "report" else report, design=design, title=title)
    if kind == "bode":
        if fmt == "csv":
            return write_bode_csv(path, artifact)
        return write_bode_svg(path, artifact, report=report, title=title)
    if fmt == "csv":
        return write_waveform_csv(path, artifact)
    return write_waveform_svg(path, artifact, title=title)


def read_report(path):
    values = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            try:
                values[key] = float(value)
            except ValueError:
                values[key] = value
    return values


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument('--reports', default='outputs', type=str)
    parser.add_argument('--output', default=None, type=str)
    args = parser.parse_args()

    results = pd.DataFrame()
    found = False
    for dirpath, _, filenames in sorted(os.walk(args.reports)):
        for name in sorted(filenames):
            if not name.endswith(".txt"):
                continue
            path = os.path.join(dirpath, name)
            values = read_report(path)
            if "gain_margin_db" not in values:
                print(f"{path} has no margins. Skipping...")
                continue
            found = True
            run = os.path.relpath(path, args.reports)
            for key in ("gain_margin_db", "phase_margin_deg", "r_comp_ohms", "c_comp_farads"):
                results.loc[run, key] = values.get(key, math.nan)
    if not found:
        print(0)
        return
    print(results)
    output = args.output or os.path.join(args.reports, "experiment_results.md")
    try:
        results.to_markdown(output)
    except ImportError:
        results.to_csv(output.replace(".md", ".csv"))


if __name__ == "__main__":
    main()
