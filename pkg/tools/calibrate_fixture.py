"""
Fits the reference plant so its uncompensated loop gain lands on four measured anchors:
0 dB crossing frequency, phase margin, -180 degree crossing frequency and gain margin.

    python tools/calibrate_fixture.py --config configs/internal_supply.json --output configs/refit.json
"""

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize
from tqdm import tqdm

root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(root)
from models import LoopAnalysisError, TraceBranch, SenseNetwork, loop_gain
from evaluations.stability import Band, margins_of
from experiments.dataset import AnalysisConfig, dump_config, load_config

logger = logging.getLogger(__name__)

FIT_BAND = Band(100.0, 1e6, 50)
MISSING_CROSSING_PENALTY = 1e3

# template / distribution fields searched in log space
FIT_PARAMETERS = (
    "dc_gain",
    "error_amp_pole_hz",
    "lc_corner_hz",
    "lc_quality",
    "extra_pole_hz",
    "distribution_resistance",
    "distribution_inductance",
)


@dataclass(frozen=True)
class FixtureAnchors:
    gain_crossover_hz: float = 5040.0
    phase_margin_deg: float = 13.0
    phase_crossover_hz: float = 6050.0
    gain_margin_db: float = 3.2
    phase_margin_scale_deg: float = 5.0
    gain_margin_scale_db: float = 1.0


def get_parameters(config: AnalysisConfig) -> np.ndarray:
    t, trace = config.template, config.sense.distribution
    values = [t.dc_gain, t.error_amp_pole_hz, t.lc_corner_hz, t.lc_quality,
              t.extra_pole_hz or 10 * t.lc_corner_hz, trace.resistance, trace.inductance]
    return np.log(np.asarray(values, dtype=float))


def set_parameters(config: AnalysisConfig, log_values) -> AnalysisConfig:
    v = dict(zip(FIT_PARAMETERS, np.exp(np.asarray(log_values, dtype=float))))
    template = replace(
        config.template,
        dc_gain=v["dc_gain"],
        error_amp_pole_hz=v["error_amp_pole_hz"],
        lc_corner_hz=v["lc_corner_hz"],
        lc_quality=v["lc_quality"],
        extra_pole_hz=v["extra_pole_hz"],
    )
    sense = SenseNetwork(
        load_r=config.sense.load_r,
        r_int=config.sense.r_int,
        lead=None,
        distribution=TraceBranch(v["distribution_resistance"], v["distribution_inductance"]),
    )
    return replace(config, template=template, sense=sense)


def anchor_error(config: AnalysisConfig, anchors: FixtureAnchors = FixtureAnchors(), band: Band = FIT_BAND) -> float:
    """Sum of squared, scaled misses of the four anchors for the uncompensated loop."""
    try:
        report = margins_of(loop_gain(config.model(compensated=False)), band)
    except (LoopAnalysisError, ValueError):
        return MISSING_CROSSING_PENALTY
    if not report.gain_crossover_hz or not report.phase_crossover_hz:
        return MISSING_CROSSING_PENALTY
    fc = report.gain_crossover_hz[0]
    fp = report.phase_crossover_hz[0]
    return (
        math.log(fc / anchors.gain_crossover_hz) ** 2
        + math.log(fp / anchors.phase_crossover_hz) ** 2
        + ((report.phase_margin_deg - anchors.phase_margin_deg) / anchors.phase_margin_scale_deg) ** 2
        + ((report.gain_margin_db - anchors.gain_margin_db) / anchors.gain_margin_scale_db) ** 2
    )


def calibrate(config: AnalysisConfig, anchors: FixtureAnchors = FixtureAnchors(), restarts: int = 4,
              spread: float = 0.3, seed: int = 0, max_iter: int = 600):
    """
    Nelder-Mead on the log parameters, from the config itself and from `restarts - 1`
    log-normal perturbations of it. Returns the best config and its anchor error.
    """
    rng = np.random.default_rng(seed)
    start = get_parameters(config)
    objective = lambda x: anchor_error(set_parameters(config, x), anchors)
    best_x, best_err = start, objective(start)
    starts = [start] + [start + spread * rng.standard_normal(start.size) for _ in range(restarts - 1)]
    for x0 in tqdm(starts, desc="calibration restarts"):
        result = minimize(objective, x0, method="Nelder-Mead",
                          options={"maxiter": max_iter, "xatol": 1e-4, "fatol": 1e-8})
        logger.info(f"restart finished with anchor error {result.fun:.4g} after {result.nit} iterations")
        if result.fun < best_err:
            best_x, best_err = result.x, float(result.fun)
    return set_parameters(config, best_x), best_err


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument('--config', default='configs/internal_supply.json', type=str)
    parser.add_argument('--output', default=None, type=str)
    parser.add_argument('--restarts', default=4, type=int)
    parser.add_argument('--seed', default=0, type=int)
    args = parser.parse_args()

    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        level=logging.INFO,
    )
    config = load_config(args.config)
    logger.info(f"starting anchor error {anchor_error(config):.4g}")
    fitted, err = calibrate(config, restarts=args.restarts, seed=args.seed)
    report = margins_of(loop_gain(fitted.model(compensated=False)), FIT_BAND)
    print(f"anchor error {err:.4g}: crossover {report.gain_crossover_hz[0]:.1f} Hz, PM {report.phase_margin_deg:.2f} deg, "
          f"phase crossover {report.phase_crossover_hz[0]:.1f} Hz, GM {report.gain_margin_db:.2f} dB")
    if args.output:
        dump_config(fitted, args.output)


if __name__ == "__main__":
    main()
