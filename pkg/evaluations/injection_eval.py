"""
Simulated series-injection loop-gain measurement.

An ideal source is inserted between the feedback network output and the error
amplifier input. The loop node equations are solved per frequency and the loop
gain is read off as the ratio of the signals on either side of the source.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from models import FrequencyResponse, LoopModel, SingularLoop, evaluate_many

logger = logging.getLogger(__name__)

CONDITIONING_WARN = 1e-6
SINGULAR_FLOOR = 1e-15


@dataclass(frozen=True)
class InjectionNodes:
    """Phasors of one frequency point (volts). v_ref is zero for small signal."""

    freq_hz: float
    v_error: complex
    v_out: complex
    v_fb: complex
    v_inj: complex

    def residuals(self, g: complex, h: complex) -> List[complex]:
        return [
            self.v_out - g * self.v_error,
            self.v_error + self.v_fb,
            self.v_fb - (h * self.v_out + self.v_inj),
        ]


def solve_nodes(g: np.ndarray, h: np.ndarray, drive: float = 1.0) -> np.ndarray:
    """
    Solves, for an injected phasor `drive`, the stacked systems
        v_out - g v_error = 0
        v_error + h v_out = -drive
    and returns an array of shape (n, 2) holding (v_error, v_out).
    """
    n = g.size
    a = np.zeros((n, 2, 2), dtype=complex)
    a[:, 0, 0] = -g
    a[:, 0, 1] = 1.0
    a[:, 1, 0] = 1.0
    a[:, 1, 1] = h
    rhs = np.zeros((n, 2, 1), dtype=complex)
    rhs[:, 1, 0] = -drive
    try:
        return np.linalg.solve(a, rhs)[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise SingularLoop(f"loop node equations are singular: {exc}") from exc


def drive_level(amplitude_v: float) -> Tuple[float, float]:
    """Splits the amplitude into a mantissa in [0.5, 1) and a power-of-two drive level."""
    if not (math.isfinite(amplitude_v) and amplitude_v > 0):
        raise ValueError(f"injection amplitude must be positive, got {amplitude_v}")
    mantissa, exponent = math.frexp(amplitude_v)
    return mantissa, math.ldexp(1.0, exponent)


def _solve_loop(m: LoopModel, freqs_hz, amplitude_v: float):
    mantissa, level = drive_level(amplitude_v)
    freqs = np.asarray(freqs_hz, dtype=float)
    g = evaluate_many(m.g, freqs)
    h = evaluate_many(m.h, freqs)

    # the determinant of the node system is 1 + g h
    det = 1.0 + g * h
    singular = np.abs(det) < SINGULAR_FLOOR
    if np.any(singular):
        raise SingularLoop(f"1 + GH vanishes at {freqs[singular].tolist()} Hz")
    for f in freqs[np.abs(det) < CONDITIONING_WARN]:
        logger.warning(f"poorly conditioned injection solve at {f:.6g} Hz, |1 + GH| < {CONDITIONING_WARN}")

    # a power-of-two drive scales every solver operation exactly
    return freqs, h, solve_nodes(g, h, level), mantissa


def inject(m: LoopModel, freqs_hz, amplitude_v: float = 1e-2) -> List[InjectionNodes]:
    freqs, _, solved, mantissa = _solve_loop(m, freqs_hz, amplitude_v)
    nodes = []
    for k, f in enumerate(freqs):
        v_error, v_out = mantissa * solved[k, 0], mantissa * solved[k, 1]
        nodes.append(InjectionNodes(float(f), complex(v_error), complex(v_out), complex(-v_error), complex(amplitude_v)))
    return nodes


def measure_loop_gain(m: LoopModel, freqs_hz, amplitude_v: float = 1e-2) -> FrequencyResponse:
    """
    Loop gain from the solved node phasors: the signal returning from the feedback
    network (h v_out) over the signal leaving the source into the amplifier input,
    with the inversion of the summing junction taken out, T = h v_out / v_error.

    The ratio is formed at the power-of-two drive level of `amplitude_v`, where the
    phasors are exact multiples of the unit solution, so T is bit-identical for
    every amplitude.
    """
    freqs, h, solved, _ = _solve_loop(m, freqs_hz, amplitude_v)
    v_error, v_out = solved[:, 0], solved[:, 1]
    if np.any(v_error == 0):
        raise SingularLoop("error node carries no signal, loop gain is unbounded")
    return FrequencyResponse(freqs, h * v_out / v_error)
