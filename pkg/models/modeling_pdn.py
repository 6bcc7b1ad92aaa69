import logging
import math
from dataclasses import dataclass
from functools import reduce
from typing import Optional, Tuple

from .modeling_tf import TFLike, TransferFunction, add, as_tf, constant, tf
from .modeling_utils import DegenerateParallel

logger = logging.getLogger(__name__)


def _check(name, value, allow_zero=True):
    if not math.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be finite and {bound}, got {value}")


@dataclass(frozen=True)
class CapBranch:
    """One capacitor: C in series with its ESR and ESL."""

    capacitance: float
    esr: float = 0.0
    esl: float = 0.0

    def __post_init__(self):
        _check("capacitance", self.capacitance, allow_zero=False)
        _check("esr", self.esr)
        _check("esl", self.esl)

    @property
    def self_resonant_hz(self) -> float:
        if self.esl == 0:
            return math.inf
        return 1.0 / (2 * math.pi * math.sqrt(self.esl * self.capacitance))


@dataclass(frozen=True)
class TraceBranch:
    resistance: float = 0.0
    inductance: float = 0.0

    def __post_init__(self):
        _check("resistance", self.resistance)
        _check("inductance", self.inductance)

    def is_ideal(self) -> bool:
        return self.resistance == 0 and self.inductance == 0


@dataclass(frozen=True)
class CapBank:
    entries: Tuple[Tuple[CapBranch, int], ...]

    def __post_init__(self):
        entries = tuple((branch, int(count)) for branch, count in self.entries)
        if not entries:
            raise ValueError("a capacitor bank needs at least one entry")
        for branch, count in entries:
            if count < 1:
                raise ValueError(f"capacitor count must be >= 1, got {count}")
        object.__setattr__(self, "entries", entries)

    @property
    def total_capacitance(self) -> float:
        return sum(branch.capacitance * count for branch, count in self.entries)

    def with_branch(self, branch: CapBranch, count: int = 1) -> "CapBank":
        return CapBank(self.entries + ((branch, count),))


def total_capacitance(bank: Optional[CapBank]) -> float:
    return 0.0 if bank is None else bank.total_capacitance


def resistor(r_ohms: float) -> TransferFunction:
    return constant(r_ohms)


def branch_impedance(b: CapBranch) -> TransferFunction:
    """Z(s) = esr + s esl + 1/(s C) = (esl C s^2 + esr C s + 1) / (C s)."""
    c = b.capacitance
    return tf([1.0, b.esr * c, b.esl * c], [0.0, c])


def trace_impedance(t: TraceBranch) -> TransferFunction:
    return tf([t.resistance, t.inductance])


def series(a: TFLike, b: TFLike) -> TransferFunction:
    return add(a, b)


def parallel(a: TFLike, b: TFLike) -> TransferFunction:
    """
    a b / (a + b) in closed form: num(a) num(b) / (num(a) den(b) + num(b) den(a)).
    """
    a, b = as_tf(a), as_tf(b)
    den = a.num * b.den + b.num * a.den
    if den.is_zero():
        raise DegenerateParallel("a + b is identically zero")
    return TransferFunction(a.num * b.num, den)


def bank_impedance(bank: CapBank) -> TransferFunction:
    branches = []
    for branch, count in bank.entries:
        z = branch_impedance(branch)
        # n identical branches in parallel divide the impedance, the degree stays put
        branches.append(TransferFunction(z.num * (1.0 / count), z.den))
    return reduce(parallel, branches)


def voltage_divider(top: TFLike, bottom: TFLike) -> TransferFunction:
    """
    bottom / (top + bottom) in closed form. A zero `top` gives exactly 1.
    """
    top, bottom = as_tf(top), as_tf(bottom)
    if top.is_zero():
        return constant(1.0)
    den = top.num * bottom.den + bottom.num * top.den
    if den.is_zero():
        raise DegenerateParallel("divider impedances sum to zero")
    return TransferFunction(bottom.num * top.den, den)


def load_network(bank: Optional[CapBank], load_r: float) -> TransferFunction:
    """Impedance seen at the remote sense point: bank in parallel with the resistive load."""
    _check("load_r", load_r, allow_zero=False)
    if bank is None:
        return resistor(load_r)
    return parallel(bank_impedance(bank), resistor(load_r))


def distribution_transfer(trace: TraceBranch, bank: Optional[CapBank], load_r: float) -> TransferFunction:
    """D(s): local output to remote sense point, the trace feeding the bank || load divider."""
    return voltage_divider(trace_impedance(trace), load_network(bank, load_r))
