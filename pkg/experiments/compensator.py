import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from models import (
    CapBank,
    CapBranch,
    InfeasibleCorner,
    LeadNetwork,
    LoopModel,
    NoCrossover,
    NoFeasibleDesign,
    RegulatorTemplate,
    SenseNetwork,
    build_loop_model,
    loop_gain,
    with_lead,
)
from evaluations.stability import (
    Band,
    BodeData,
    StabilityReport,
    margins_of,
    normalized_margin,
    sweep_band,
)
from evaluations.task_config import (
    CAP_SWEEP_HIGH_F,
    CAP_SWEEP_LOW_F,
    CAP_SWEEP_POINTS,
    DEFAULT_C_CANDIDATES,
    F0_CROSSOVER_RATIO,
    F0_GRID_HIGH,
    F0_GRID_LOW,
    F0_GRID_POINTS,
    STANDARD_SERIES,
)

logger = logging.getLogger(__name__)

# R_comp denominators at or below this put R_comp above 1e4 R_int. Corners less than 0.01% above
# the R_int corner are rejected with them, so 338.63 Hz at 100 ohm / 4.7 uF counts as infeasible.
FEASIBILITY_MARGIN = 1e-4


def lead_corner(r_ohms: float, c_farads: float) -> float:
    """f0 = 1 / (2 pi R C)."""
    if not (r_ohms > 0 and c_farads > 0):
        raise ValueError(f"lead corner needs r > 0 and c > 0, got r={r_ohms}, c={c_farads}")
    return 1.0 / (2 * math.pi * r_ohms * c_farads)


def parallel_resistance(a: float, b: float) -> float:
    return a * b / (a + b)


def rcomp_for_f0(r_int_ohms: float, c_comp_farads: float, f0_hz: float) -> float:
    """
    R_comp that puts the lead corner at `f0_hz`: R_int / (2 pi f0 C_comp R_int - 1).

    Raises `InfeasibleCorner` when f0 is at or below 1/(2 pi C_comp R_int), the corner
    R_int reaches on its own.
    """
    if not (r_int_ohms > 0 and c_comp_farads > 0 and f0_hz > 0):
        raise ValueError("r_int, c_comp and f0 must all be positive")
    denominator = 2 * math.pi * f0_hz * c_comp_farads * r_int_ohms - 1.0
    if denominator <= FEASIBILITY_MARGIN:
        raise InfeasibleCorner(
            f"f0 = {f0_hz:.6g} Hz is not above the R_int corner "
            f"{lead_corner(r_int_ohms, c_comp_farads):.6g} Hz for C_comp = {c_comp_farads:.3g} F"
        )
    return r_int_ohms / denominator


def pick_f0(uncompensated: BodeData, ratio: float = F0_CROSSOVER_RATIO) -> float:
    """Starting lead corner: a fixed fraction of the lowest gain crossover."""
    logf = np.log(uncompensated.freqs_hz)
    mag = uncompensated.mag_db
    above = mag >= 0.0
    idx = np.flatnonzero(above[:-1] != above[1:])
    if idx.size == 0:
        raise NoCrossover("loop gain never crosses 0 dB inside the swept band")
    i = idx[0]
    t = -mag[i] / (mag[i + 1] - mag[i])
    return ratio * float(np.exp(logf[i] + t * (logf[i + 1] - logf[i])))


def snap_to_series(value: float, series: str = "E24") -> float:
    """Nearest standard value by geometric distance."""
    if not value > 0:
        raise ValueError(f"only positive values can be snapped, got {value}")
    if series.upper() not in STANDARD_SERIES:
        raise ValueError(f"unknown standard series {series}")
    mantissas = STANDARD_SERIES[series.upper()]
    decade = math.floor(math.log10(value))
    candidates = [float(f"{m}e{decade}") for m in mantissas] + [float(f"1e{decade + 1}"), float(f"{mantissas[-1]}e{decade - 1}")]
    return min(candidates, key=lambda c: (abs(math.log(value / c)), c))


@dataclass
class CompensationDesign:
    f0_hz: float
    r_comp_ohms: float
    c_comp_farads: float
    r_int_ohms: float
    achieved: StabilityReport
    target_f0_hz: Optional[float] = None
    objective: float = -math.inf
    uncompensated: Optional[StabilityReport] = None

    def __post_init__(self):
        if not self.f0_hz > lead_corner(self.r_int_ohms, self.c_comp_farads):
            raise ValueError("lead corner must lie above the R_int corner")

    @property
    def lead(self) -> LeadNetwork:
        return LeadNetwork(self.r_comp_ohms, self.c_comp_farads)

    @property
    def effective_resistance(self) -> float:
        return parallel_resistance(self.r_comp_ohms, self.r_int_ohms)


def evaluate_lead(model: LoopModel, lead: LeadNetwork, band: Band = None) -> StabilityReport:
    return margins_of(loop_gain(with_lead(model, lead)), band)


def design_lead(model: LoopModel, c_candidates: Optional[Sequence[float]] = None, f0: Optional[float] = None,
                series: str = "E24", band: Band = None, show_progress: bool = False) -> CompensationDesign:
    """
    Searches lead networks for the largest worst-case margin min(GM / 10 dB, PM / 45 deg).

    Args:
        model (`LoopModel`):
            Loop to compensate. Any lead it already carries is removed first.
        c_candidates (`List[float]`, *optional*):
            C_comp values to try. Defaults to 1, 2.2, 4.7 and 10 uF.
        f0 (`float`, *optional*):
            Explicit corner. Without it 11 log-spaced corners in [0.2, 0.8] x crossover are tried.
        series (`str`, defaults to `"E24"`):
            Standard series R_comp is snapped to.

    Candidates whose corner is infeasible, whose closed loop is not pole-stable or that
    score below the uncompensated loop are dropped. Ties go to the smaller C, then the
    smaller f0.
    """
    band = band or Band()
    c_candidates = list(DEFAULT_C_CANDIDATES if c_candidates is None else c_candidates)
    if not c_candidates:
        raise NoFeasibleDesign("no C_comp candidates given")
    base_model = with_lead(model, None)
    base_bode = sweep_band(loop_gain(base_model), band)
    base_report = margins_of(loop_gain(base_model), band)
    base_objective = normalized_margin(base_report)

    if f0 is not None:
        grid = [float(f0)]
    else:
        crossover = pick_f0(base_bode, ratio=1.0)
        grid = (crossover * np.geomspace(F0_GRID_LOW, F0_GRID_HIGH, F0_GRID_POINTS)).tolist()

    best: Optional[CompensationDesign] = None
    pairs = [(c, f) for c in sorted(c_candidates) for f in sorted(grid)]
    for c, target in tqdm(pairs, desc="lead search", disable=not show_progress):
        try:
            r_exact = rcomp_for_f0(model.r_int, c, target)
        except InfeasibleCorner as exc:
            logger.debug(f"skip C={c:.3g} F: {exc}")
            continue
        r_comp = snap_to_series(r_exact, series)
        report = evaluate_lead(base_model, LeadNetwork(r_comp, c), band)
        objective = normalized_margin(report)
        if report.pole_stable is False or objective < base_objective:
            logger.debug(f"skip C={c:.3g} F, f0={target:.4g} Hz: objective {objective:.3f} vs {base_objective:.3f}")
            continue
        if best is None or objective > best.objective:
            best = CompensationDesign(
                f0_hz=lead_corner(parallel_resistance(r_comp, model.r_int), c),
                r_comp_ohms=r_comp,
                c_comp_farads=c,
                r_int_ohms=model.r_int,
                achieved=report,
                target_f0_hz=target,
                objective=objective,
                uncompensated=base_report,
            )

    if best is None:
        raise NoFeasibleDesign("every lead candidate was infeasible or reduced the worst-case margin")
    logger.info(
        f"lead design: C_comp={best.c_comp_farads:.3g} F, R_comp={best.r_comp_ohms:.4g} ohm, "
        f"f0={best.f0_hz:.5g} Hz, GM={best.achieved.gain_margin_db:.2f} dB, PM={best.achieved.phase_margin_deg:.2f} deg"
    )
    return best


def compare_designs(before: StabilityReport, after: StabilityReport) -> pd.DataFrame:
    rows = {}
    for name, report in (("uncompensated", before), ("compensated", after)):
        rows[name] = {
            "gain_margin_db": report.gain_margin_db,
            "phase_margin_deg": report.phase_margin_deg,
            "gain_crossover_hz": min(report.gain_crossover_hz, default=math.nan),
            "phase_crossover_hz": min(report.phase_crossover_hz, default=math.nan),
            "normalized_margin": normalized_margin(report),
        }
    return pd.DataFrame(rows).T


def capacitance_sweep(template: RegulatorTemplate, sense: SenseNetwork, capacitances: Optional[List[float]] = None,
                      band: Band = None, show_progress: bool = False) -> pd.DataFrame:
    """
    Margins of the uncompensated loop while one ideal capacitor of growing size is
    the whole output bank.
    """
    if not capacitances:
        capacitances = np.geomspace(CAP_SWEEP_LOW_F, CAP_SWEEP_HIGH_F, CAP_SWEEP_POINTS).tolist()
    sense = SenseNetwork(load_r=sense.load_r, r_int=sense.r_int, lead=None, distribution=sense.distribution)
    rows = []
    for c in tqdm(capacitances, desc="capacitance sweep", disable=not show_progress):
        model = build_loop_model(template, sense, CapBank(((CapBranch(c), 1),)))
        report = margins_of(loop_gain(model), band)
        rows.append({
            "capacitance_f": c,
            "gain_crossover_hz": min(report.gain_crossover_hz, default=math.nan),
            "phase_margin_deg": report.phase_margin_deg,
            "gain_margin_db": report.gain_margin_db,
            "pole_stable": report.pole_stable,
        })
    return pd.DataFrame(rows)
