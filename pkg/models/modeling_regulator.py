import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .modeling_pdn import (
    CapBank,
    TraceBranch,
    bank_impedance,
    distribution_transfer,
    parallel,
    resistor,
    total_capacitance,
    trace_impedance,
)
from .modeling_tf import (
    Polynomial,
    TransferFunction,
    as_tf,
    constant,
    feedback_close,
    mul,
    tf,
)
from .modeling_utils import DegenerateLoop

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi


def _positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and > 0, got {value}")


@dataclass(frozen=True)
class RegulatorTemplate:
    """
    Parametric small-signal stand-in for the regulator's forward path G(s).

    The output filter is an LC section with capacitance `filter_capacitance`;
    an external bank adds to it and pulls the corner down as 1/sqrt(C_total).
    `output_resistance` is the source resistance behind the filter inductor,
    used only by the open-loop output impedance.
    """

    dc_gain: float
    error_amp_pole_hz: float
    lc_corner_hz: float
    lc_quality: float
    extra_pole_hz: Optional[float] = None
    filter_capacitance: float = 1e-3
    output_resistance: float = 0.25

    def __post_init__(self):
        _positive("dc_gain", self.dc_gain)
        _positive("error_amp_pole_hz", self.error_amp_pole_hz)
        _positive("lc_corner_hz", self.lc_corner_hz)
        _positive("lc_quality", self.lc_quality)
        _positive("filter_capacitance", self.filter_capacitance)
        if self.extra_pole_hz is not None:
            _positive("extra_pole_hz", self.extra_pole_hz)
        if not (math.isfinite(self.output_resistance) and self.output_resistance >= 0):
            raise ValueError(f"output_resistance must be finite and >= 0, got {self.output_resistance}")

    @property
    def filter_inductance(self) -> float:
        return 1.0 / ((TWO_PI * self.lc_corner_hz) ** 2 * self.filter_capacitance)

    def shifted_corner_hz(self, bank: Optional[CapBank] = None) -> float:
        c_f = self.filter_capacitance
        return self.lc_corner_hz * math.sqrt(c_f / (c_f + total_capacitance(bank)))


@dataclass(frozen=True)
class LeadNetwork:
    """R_comp (parallel to R_int) and C_comp (local output to sense node)."""

    r_comp: float
    c_comp: float

    def __post_init__(self):
        if not (math.isfinite(self.r_comp) and self.r_comp >= 0):
            raise ValueError(f"r_comp must be finite and >= 0, got {self.r_comp}")
        _positive("c_comp", self.c_comp)


@dataclass(frozen=True)
class SenseNetwork:
    load_r: float
    r_int: float = 100.0
    lead: Optional[LeadNetwork] = None
    distribution: TraceBranch = field(default_factory=TraceBranch)

    def __post_init__(self):
        _positive("r_int", self.r_int)
        _positive("load_r", self.load_r)


@dataclass(frozen=True)
class LoopModel:
    """
    Loop of the regulator block diagram: V_error -> g -> V_out -> h -> V_fb.

    `d` is the bare distribution transfer and `r_int` the internal sense resistor;
    together they let a lead network be swapped in without rebuilding the plant.
    """

    g: TransferFunction
    h: TransferFunction
    z_open: TransferFunction
    d: Optional[TransferFunction] = None
    r_int: float = 100.0
    lead: Optional[LeadNetwork] = None

    def __post_init__(self):
        g, h = as_tf(self.g), as_tf(self.h)
        if not (g.is_proper() and h.is_proper()):
            raise ValueError("forward and feedback paths must be proper")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "z_open", as_tf(self.z_open))


def build_forward_path(t: RegulatorTemplate, bank: Optional[CapBank] = None,
                       load_r: Optional[float] = None) -> TransferFunction:
    """
    G(s) = A0 / (1 + s/w_ea) / (1 + s/(Q w0) + s^2/w0^2) [/ (1 + s/w_x)],
    with w0 the LC corner after the bank has been added to the filter capacitance.

    `load_r` is accepted and ignored. The load only enters the loop through the
    distribution transfer D(s) and the open-loop output impedance.
    """
    w_ea = TWO_PI * t.error_amp_pole_hz
    w0 = TWO_PI * t.shifted_corner_hz(bank)
    den = Polynomial([1.0, 1.0 / w_ea]) * Polynomial([1.0, 1.0 / (t.lc_quality * w0), 1.0 / w0 ** 2])
    if t.extra_pole_hz is not None:
        den = den * Polynomial([1.0, 1.0 / (TWO_PI * t.extra_pole_hz)])
    return TransferFunction(Polynomial([t.dc_gain]), den)


def open_loop_output_impedance(t: RegulatorTemplate, bank: Optional[CapBank], load_r: float) -> TransferFunction:
    """(R_src + s L_f) || C_f || bank || load_r, seen from the regulator output."""
    z = tf([t.output_resistance, t.filter_inductance])
    z = parallel(z, tf([1.0], [0.0, t.filter_capacitance]))
    if bank is not None:
        z = parallel(z, bank_impedance(bank))
    return parallel(z, resistor(load_r))


def lead_sense_transfer(d: TransferFunction, r_int: float, lead: Optional[LeadNetwork]) -> TransferFunction:
    """
    Nodal solution of the sense node: R_int || R_comp from the remote point, C_comp
    from the local output. H = (D + s tau) / (1 + s tau), tau = C_comp (R_comp || R_int).
    """
    d = as_tf(d)
    if lead is None or lead.r_comp == 0:
        return d
    r_p = lead.r_comp * r_int / (lead.r_comp + r_int)
    tau = lead.c_comp * r_p
    step = Polynomial([0.0, tau])
    return TransferFunction(d.num + step * d.den, d.den * Polynomial([1.0, tau]))


def sense_transfer(n: SenseNetwork, bank: Optional[CapBank] = None) -> TransferFunction:
    d = distribution_transfer(n.distribution, bank, n.load_r)
    return lead_sense_transfer(d, n.r_int, n.lead)


def build_loop_model(template: RegulatorTemplate, sense: SenseNetwork, bank: Optional[CapBank] = None) -> LoopModel:
    d = distribution_transfer(sense.distribution, bank, sense.load_r)
    return LoopModel(
        g=build_forward_path(template, bank),
        h=lead_sense_transfer(d, sense.r_int, sense.lead),
        z_open=open_loop_output_impedance(template, bank, sense.load_r),
        d=d,
        r_int=sense.r_int,
        lead=sense.lead,
    )


def with_lead(m: LoopModel, lead: Optional[LeadNetwork]) -> LoopModel:
    """Same plant with a different (or no) lead network."""
    if m.d is None:
        raise ValueError("loop model carries no distribution transfer, cannot re-place the lead network")
    return replace(m, h=lead_sense_transfer(m.d, m.r_int, lead), lead=lead)


def loop_gain(m: LoopModel) -> TransferFunction:
    return mul(m.g, m.h)


def closed_loop_ref_to_out(m: LoopModel) -> TransferFunction:
    return feedback_close(m.g, m.h)


def closed_loop_output_impedance(m: LoopModel) -> TransferFunction:
    """Z_cl = z_open / (1 + T), with 1/(1 + T) formed as den(T) / (den(T) + num(T))."""
    t = loop_gain(m)
    char = t.den + t.num
    if char.is_zero():
        raise DegenerateLoop("1 + T is identically zero")
    return mul(m.z_open, TransferFunction(t.den, char))
