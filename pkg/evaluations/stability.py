import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from models import (
    ConvergenceFailure,
    FrequencyResponse,
    GridTooCoarse,
    TransferFunction,
    characteristic_polynomial,
    constant,
    evaluate_many,
    polynomial_roots,
)
from evaluations.task_config import (
    DEFAULT_F_MAX_HZ,
    DEFAULT_F_MIN_HZ,
    DEFAULT_POINTS_PER_DECADE,
    GAIN_MARGIN_TARGET_DB,
    MARGINAL_GM_DB,
    MARGINAL_PM_DEG,
    MAX_REFINEMENTS,
    MIN_POINTS_PER_DECADE,
    PHASE_MARGIN_TARGET_DEG,
)

logger = logging.getLogger(__name__)

STABLE_REAL_PART = -1e-9
# adjacent unwrapped samples further apart than this trigger a denser grid
REFINE_STEP_DEG = 90.0


@dataclass(frozen=True)
class Band:
    f_min_hz: float = DEFAULT_F_MIN_HZ
    f_max_hz: float = DEFAULT_F_MAX_HZ
    points_per_decade: int = DEFAULT_POINTS_PER_DECADE

    def __post_init__(self):
        if not (0 < self.f_min_hz < self.f_max_hz and math.isfinite(self.f_max_hz)):
            raise ValueError(f"band needs 0 < f_min < f_max, got {self.f_min_hz}..{self.f_max_hz}")
        if self.points_per_decade < MIN_POINTS_PER_DECADE:
            raise ValueError(f"points_per_decade must be >= {MIN_POINTS_PER_DECADE}, got {self.points_per_decade}")

    def grid(self, points_per_decade: Optional[int] = None) -> np.ndarray:
        ppd = points_per_decade or self.points_per_decade
        decades = math.log10(self.f_max_hz / self.f_min_hz)
        n = int(math.ceil(decades * ppd)) + 1
        freqs = np.logspace(math.log10(self.f_min_hz), math.log10(self.f_max_hz), n)
        freqs[0], freqs[-1] = self.f_min_hz, self.f_max_hz
        return freqs


@dataclass(frozen=True, eq=False)
class BodeData:
    freqs_hz: np.ndarray
    mag_db: np.ndarray
    phase_deg: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.freqs_hz, dtype=float)
        mag = np.asarray(self.mag_db, dtype=float)
        phase = np.asarray(self.phase_deg, dtype=float)
        if freqs.ndim != 1 or freqs.size < 2 or mag.shape != freqs.shape or phase.shape != freqs.shape:
            raise ValueError("bode data needs at least two samples and equal-length columns")
        if np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
            raise ValueError("bode frequencies must be positive and strictly increasing")
        if np.any(np.abs(np.diff(phase)) > 180.0):
            raise ValueError("bode phase is not continuous (adjacent samples differ by more than 180 degrees)")
        for name, arr in (("freqs_hz", freqs), ("mag_db", mag), ("phase_deg", phase)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.freqs_hz.size


@dataclass
class StabilityReport:
    gain_margin_db: float = math.inf
    phase_margin_deg: float = math.inf
    gain_crossover_hz: List[float] = field(default_factory=list)
    phase_crossover_hz: List[float] = field(default_factory=list)
    phase_margins_deg: List[float] = field(default_factory=list)
    gain_margins_db: List[float] = field(default_factory=list)
    worst_case: Tuple[Optional[float], Optional[float]] = (None, None)
    pole_stable: Optional[bool] = None

    @property
    def marginal(self) -> bool:
        return abs(self.gain_margin_db) <= MARGINAL_GM_DB or abs(self.phase_margin_deg) <= MARGINAL_PM_DEG

    @property
    def margin_stable(self) -> bool:
        return self.gain_margin_db > 0 and self.phase_margin_deg > 0


def unwrap_phase_deg(raw_deg) -> np.ndarray:
    """
    Adds multiples of 360 wherever adjacent samples jump by more than 180 degrees.
    Samples that are already continuous come back bit-identical.
    """
    raw = np.asarray(raw_deg, dtype=float)
    steps = np.diff(raw)
    correction = np.where(np.abs(steps) > 180.0, -360.0 * np.round(steps / 360.0), 0.0)
    unwrapped = raw.copy()
    if np.any(correction):
        unwrapped[1:] += np.cumsum(correction)
    return unwrapped


def lag_branch(phase) -> np.ndarray:
    """Shifts a continuous phase trace by a multiple of 360 so it starts on (-270, 90], lags reading negative."""
    phase = np.asarray(phase, dtype=float)
    shift = 360.0 * math.ceil((phase[0] - 90.0) / 360.0)
    return phase - shift if shift else phase


def bode_from_response(response: FrequencyResponse) -> BodeData:
    values = response.values
    with np.errstate(divide="ignore"):
        mag_db = 20 * np.log10(np.abs(values))
    phase = lag_branch(unwrap_phase_deg(np.angle(values, deg=True)))
    return BodeData(response.freqs_hz, mag_db, phase)


def sweep(tf: TransferFunction, f_min_hz: float = DEFAULT_F_MIN_HZ, f_max_hz: float = DEFAULT_F_MAX_HZ,
          points_per_decade: int = DEFAULT_POINTS_PER_DECADE) -> BodeData:
    """
    Log-spaced Bode sweep of `tf` over [f_min_hz, f_max_hz], endpoints included.

    The grid density doubles (at most three times) while any adjacent pair of unwrapped
    phase samples still differs by more than 90 degrees; `GridTooCoarse` after that.
    """
    band = Band(f_min_hz, f_max_hz, points_per_decade)
    ppd = band.points_per_decade
    for attempt in range(MAX_REFINEMENTS + 1):
        freqs = band.grid(ppd)
        bode = bode_from_response(FrequencyResponse(freqs, evaluate_many(tf, freqs)))
        worst_step = float(np.max(np.abs(np.diff(bode.phase_deg))))
        if worst_step <= REFINE_STEP_DEG:
            return bode
        if attempt < MAX_REFINEMENTS:
            logger.info(f"phase step of {worst_step:.1f} deg at {ppd} points/decade, refining grid")
            ppd *= 2
    raise GridTooCoarse(f"phase still steps by {worst_step:.1f} deg at {ppd} points/decade")


def sweep_band(tf: TransferFunction, band: Band) -> BodeData:
    return sweep(tf, band.f_min_hz, band.f_max_hz, band.points_per_decade)


def _crossings(y: np.ndarray, level_of) -> List[Tuple[int, float]]:
    """Indices i where y crosses a level between samples i and i + 1, with the level crossed."""
    out = []
    for i in np.flatnonzero(np.diff(level_of(y)) != 0):
        out.append((int(i), float(max(level_of(y[i:i + 2])))))
    return out


def _interp(x0, x1, y0, y1, level):
    t = (level - y0) / (y1 - y0)
    return x0 + t * (x1 - x0), t


def margins(b: BodeData) -> StabilityReport:
    """
    Gain and phase margins of a loop-gain Bode plot.

    Every 0 dB crossing yields a phase margin (180 + phase there) and every crossing
    of -180 (plus any multiple of 360) yields a gain margin (-dB there). Crossings are
    interpolated linearly against log frequency. The reported margins are the minima.
    """
    logf = np.log(b.freqs_hz)
    mag, phase = b.mag_db, b.phase_deg
    report = StabilityReport()

    pm_at = None
    for i, _ in _crossings(mag, lambda y: (np.asarray(y) >= 0.0).astype(int)):
        lf, t = _interp(logf[i], logf[i + 1], mag[i], mag[i + 1], 0.0)
        pm = 180.0 + phase[i] + t * (phase[i + 1] - phase[i])
        report.gain_crossover_hz.append(float(np.exp(lf)))
        report.phase_margins_deg.append(float(pm))
        if pm < report.phase_margin_deg:
            report.phase_margin_deg, pm_at = float(pm), float(np.exp(lf))

    gm_at = None
    branch = lambda y: np.floor((np.asarray(y) + 180.0) / 360.0).astype(int)
    for i, k in _crossings(phase, branch):
        level = -180.0 + 360.0 * k
        lf, t = _interp(logf[i], logf[i + 1], phase[i], phase[i + 1], level)
        gm = -(mag[i] + t * (mag[i + 1] - mag[i]))
        report.phase_crossover_hz.append(float(np.exp(lf)))
        report.gain_margins_db.append(float(gm))
        if gm < report.gain_margin_db:
            report.gain_margin_db, gm_at = float(gm), float(np.exp(lf))

    report.worst_case = (gm_at, pm_at)
    return report


def pole_stable(g: TransferFunction, h: TransferFunction = None) -> bool:
    """True iff every zero of den(g) den(h) + num(g) num(h) has real part below -1e-9 rad/s."""
    char = characteristic_polynomial(g, constant(1.0) if h is None else h)
    if char.degree < 1:
        return True
    return all(r.real < STABLE_REAL_PART for r in polynomial_roots(char))


def closed_loop_poles(g: TransferFunction, h: TransferFunction = None) -> List[complex]:
    char = characteristic_polynomial(g, constant(1.0) if h is None else h)
    if char.degree < 1:
        return []
    return polynomial_roots(char)


def margins_of(tf: TransferFunction, band: Band = None) -> StabilityReport:
    band = band or Band()
    report = margins(sweep_band(tf, band))
    try:
        report.pole_stable = pole_stable(tf)
    except ConvergenceFailure as exc:
        logger.warning(f"closed-loop roots did not converge, pole stability unknown: {exc}")
    return report


def meets_targets(report: StabilityReport, gm_db: float = GAIN_MARGIN_TARGET_DB,
                  pm_deg: float = PHASE_MARGIN_TARGET_DEG) -> bool:
    return report.gain_margin_db >= gm_db and report.phase_margin_deg >= pm_deg


def normalized_margin(report: StabilityReport) -> float:
    """Worst margin against the design targets: min(GM / 10 dB, PM / 45 deg)."""
    return min(report.gain_margin_db / GAIN_MARGIN_TARGET_DB, report.phase_margin_deg / PHASE_MARGIN_TARGET_DEG)
