from dataclasses import dataclass, field
from typing import Optional
import logging
import math

logger = logging.getLogger(__name__)
logger.setLevel("INFO")

OUTPUT_FORMATS = tuple(['csv', 'svg', 'txt'])

# Polynomials above this degree lose too much conditioning in the monomial basis.
MAX_DEGREE = 32


class LoopAnalysisError(Exception):
    """Base class for every failure raised by the analysis library."""


class PoleOnAxis(LoopAnalysisError):
    pass


class DegenerateLoop(LoopAnalysisError):
    pass


class DegenerateParallel(LoopAnalysisError):
    pass


class DegreeCapExceeded(LoopAnalysisError):
    pass


class ConvergenceFailure(LoopAnalysisError):
    pass


class GridTooCoarse(LoopAnalysisError):
    pass


class InfeasibleCorner(LoopAnalysisError):
    pass


class NoCrossover(LoopAnalysisError):
    pass


class NoFeasibleDesign(LoopAnalysisError):
    pass


class ImproperTransferFunction(LoopAnalysisError):
    pass


class UnstableSystem(LoopAnalysisError):
    def __init__(self, message, poles=()):
        super().__init__(message)
        self.poles = list(poles)


class SingularLoop(LoopAnalysisError):
    pass


class ConfigError(LoopAnalysisError):
    """Anything wrong with user supplied files. The CLI maps these to exit code 2."""


class IoError(ConfigError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(ConfigError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class NonMonotonicFrequency(ConfigError):
    pass


def parse_float_list(text):
    """Parses '[1e-6, 2.2e-6]', '1e-6,2.2e-6' or '1e-6 2.2e-6' into a list of floats."""
    if text is None or text.lower() in ("none", "false", "f", "no", "n", "[]", "{}", "()"):
        return []
    text = text.strip("[]").strip("{}").strip("()")
    sep = "," if "," in text else " "
    return [float(item) for item in text.split(sep) if item.strip()]


@dataclass
class AnalysisArguments:
    """
    Flags shared by every sub-command.
    """

    config: Optional[str] = field(
        default=None,
        metadata={"help": "Path of the JSON analysis config (schema 1). Required by every sub-command except import-measure."}
    )
    out: Optional[str] = field(
        default=None,
        metadata={"help": "Output path. The extension is replaced according to --format; stdout when omitted."}
    )
    fmin: Optional[float] = field(
        default=None, metadata={"help": "Lower sweep bound in Hz, overrides the config sweep block."}
    )
    fmax: Optional[float] = field(
        default=None, metadata={"help": "Upper sweep bound in Hz, overrides the config sweep block."}
    )
    ppd: Optional[int] = field(
        default=None, metadata={"help": "Sweep points per decade, overrides the config sweep block."}
    )
    format: str = field(
        default="txt",
        metadata={"help": "Output format. Options: " + ", ".join(OUTPUT_FORMATS)}
    )
    input: Optional[str] = field(
        default=None, metadata={"help": "Measured loop-gain CSV (freq_hz,mag_db,phase_deg) for import-measure."}
    )

    def __post_init__(self):
        self.format = self.format.lower()
        if self.format not in OUTPUT_FORMATS:
            raise ValueError(f"--format must be one of {OUTPUT_FORMATS}, got {self.format}")


@dataclass
class MarginArguments:
    assert_stable: bool = field(
        default=False,
        metadata={"help": "Exit with code 1 when the worst margins are below 10 dB / 45 degrees."}
    )
    compensated: bool = field(
        default=True,
        metadata={"help": "Analyse the loop with the lead network of the config (when present)."}
    )


@dataclass
class CompensationArguments:
    c_candidates: Optional[str] = field(
        default=None,
        metadata={"help": "Candidate C_comp values in farads, e.g. '[1e-6, 2.2e-6, 4.7e-6]'. Defaults to 1, 2.2, 4.7, 10 uF."}
    )
    f0: Optional[float] = field(
        default=None, metadata={"help": "Explicit lead corner in Hz; skips the f0 grid search."}
    )
    series: str = field(
        default="E24", metadata={"help": "Standard series used to snap R_comp. Options: E24, E12"}
    )

    def __post_init__(self):
        self.c_candidates = parse_float_list(self.c_candidates)
        bad = [c for c in self.c_candidates if not (math.isfinite(c) and c > 0)]
        if bad:
            raise ValueError(f"--c_candidates must all be positive, got {bad}")
        if self.f0 is not None and not (math.isfinite(self.f0) and self.f0 > 0):
            raise ValueError(f"--f0 must be positive, got {self.f0}")
        self.series = self.series.upper()
        if self.series not in ("E24", "E12"):
            raise ValueError(f"--series must be E24 or E12, got {self.series}")


@dataclass
class TransientArguments:
    step_amps: Optional[float] = field(
        default=None, metadata={"help": "Load-step size in amperes (i_after - i_before), overrides the config step block."}
    )
    duration: Optional[float] = field(
        default=None, metadata={"help": "Simulated time in seconds."}
    )
    dt: Optional[float] = field(
        default=None, metadata={"help": "Sample period in seconds."}
    )
    compensated: bool = field(
        default=True,
        metadata={"help": "Simulate the loop with the lead network of the config (when present)."}
    )


@dataclass
class InjectionArguments:
    amplitude: float = field(
        default=1e-2, metadata={"help": "Injected source amplitude in volts. Does not change the result."}
    )

    def __post_init__(self):
        if not (math.isfinite(self.amplitude) and self.amplitude > 0):
            raise ValueError(f"--amplitude must be positive, got {self.amplitude}")


@dataclass
class SweepArguments:
    capacitances: Optional[str] = field(
        default=None,
        metadata={"help": "Ideal bank capacitances in farads for cap-sweep. Defaults to 41 log-spaced values over 100 uF-10 mF."}
    )

    def __post_init__(self):
        self.capacitances = parse_float_list(self.capacitances)
        bad = [c for c in self.capacitances if not (math.isfinite(c) and c > 0)]
        if bad:
            raise ValueError(f"--capacitances must all be positive, got {bad}")
