"""
Loading of analysis configs (JSON, schema 1) and of measured loop-gain CSV files.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from models import (
    CapBank,
    CapBranch,
    LeadNetwork,
    LoopModel,
    NonMonotonicFrequency,
    ParseError,
    RegulatorTemplate,
    SenseNetwork,
    TraceBranch,
    ValidationError,
    build_loop_model,
)
from evaluations.stability import Band, BodeData, StabilityReport, lag_branch, margins, unwrap_phase_deg
from evaluations.task_config import BODE_CSV_HEADER, CONFIG_SCHEMA_VERSION, DEFAULT_R_INT_OHMS
from experiments.transient import LoadStep

logger = logging.getLogger(__name__)

DEFAULT_LOAD_STEP = LoadStep(i_before_amps=0.0, i_after_amps=5.0, dt_s=1e-7, duration_s=5e-3)

# field name -> (required, rule); rules: "positive", "nonneg", "any", "count"
REGULATOR_FIELDS = {
    "dc_gain": (True, "positive"),
    "error_amp_pole_hz": (True, "positive"),
    "lc_corner_hz": (True, "positive"),
    "lc_quality": (True, "positive"),
    "extra_pole_hz": (False, "positive"),
    "filter_capacitance": (False, "positive"),
    "output_resistance": (False, "nonneg"),
}
BANK_FIELDS = {
    "capacitance": (True, "positive"),
    "esr": (False, "nonneg"),
    "esl": (False, "nonneg"),
    "count": (False, "count"),
}
SENSE_FIELDS = {
    "load_r": (True, "positive"),
    "r_int": (False, "positive"),
    "lead": (False, "block"),
    "distribution": (False, "block"),
}
LEAD_FIELDS = {"r_comp": (True, "nonneg"), "c_comp": (True, "positive")}
DISTRIBUTION_FIELDS = {"resistance": (False, "nonneg"), "inductance": (False, "nonneg")}
SWEEP_FIELDS = {
    "f_min_hz": (False, "positive"),
    "f_max_hz": (False, "positive"),
    "points_per_decade": (False, "count"),
}
STEP_FIELDS = {
    "i_before_amps": (False, "any"),
    "i_after_amps": (False, "any"),
    "t_step_s": (False, "nonneg"),
    "dt_s": (False, "positive"),
    "duration_s": (False, "positive"),
}
TOP_FIELDS = {
    "schema": (True, "count"),
    "name": (False, "text"),
    "setpoint_volts": (False, "positive"),
    "regulator": (True, "block"),
    "bank": (False, "list"),
    "sense": (True, "block"),
    "sweep": (False, "block"),
    "step": (False, "block"),
}


@dataclass(frozen=True)
class AnalysisConfig:
    template: RegulatorTemplate
    sense: SenseNetwork
    bank: Optional[CapBank] = None
    sweep: Band = field(default_factory=Band)
    step: Optional[LoadStep] = None
    setpoint_volts: Optional[float] = None
    name: Optional[str] = None

    def model(self, compensated: bool = True) -> LoopModel:
        sense = self.sense
        if not compensated and sense.lead is not None:
            sense = SenseNetwork(load_r=sense.load_r, r_int=sense.r_int, lead=None, distribution=sense.distribution)
        return build_loop_model(self.template, sense, self.bank)

    @property
    def load_step(self) -> LoadStep:
        return self.step or DEFAULT_LOAD_STEP


def _check_block(block: Any, path: str, fields: Dict[str, tuple]) -> Dict[str, Any]:
    if not isinstance(block, dict):
        raise ValidationError(path, "expected an object")
    for key in block:
        if key not in fields:
            raise ValidationError(f"{path}.{key}" if path else key, "unknown key")
    out = {}
    for key, (required, rule) in fields.items():
        where = f"{path}.{key}" if path else key
        if key not in block or block[key] is None:
            if required:
                raise ValidationError(where, "missing required field")
            continue
        value = block[key]
        if rule in ("block", "list", "text"):
            out[key] = value
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(where, f"expected a number, got {value!r}")
        value = float(value) if rule != "count" else value
        if rule == "count" and (not isinstance(value, int) or value < 1):
            raise ValidationError(where, f"expected a positive integer, got {value!r}")
        if rule != "count" and not math.isfinite(value):
            raise ValidationError(where, f"expected a finite number, got {value!r}")
        if rule == "positive" and not value > 0:
            raise ValidationError(where, f"must be > 0, got {value!r}")
        if rule == "nonneg" and not value >= 0:
            raise ValidationError(where, f"must be >= 0, got {value!r}")
        out[key] = value
    return out


def _build(path: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ValidationError(path, str(exc)) from exc


def parse_config(raw: Any) -> AnalysisConfig:
    top = _check_block(raw, "", TOP_FIELDS)
    if top["schema"] != CONFIG_SCHEMA_VERSION:
        raise ValidationError("schema", f"unsupported schema {top['schema']}, expected {CONFIG_SCHEMA_VERSION}")
    if "name" in top and not isinstance(top["name"], str):
        raise ValidationError("name", "expected a string")

    template = _build("regulator", RegulatorTemplate, **_check_block(top["regulator"], "regulator", REGULATOR_FIELDS))

    bank = None
    entries = top.get("bank")
    if entries is not None:
        if not isinstance(entries, list):
            raise ValidationError("bank", "expected a list of capacitor entries")
        parsed = []
        for k, entry in enumerate(entries):
            values = _check_block(entry, f"bank[{k}]", BANK_FIELDS)
            count = values.pop("count", 1)
            parsed.append((_build(f"bank[{k}]", CapBranch, **values), count))
        bank = CapBank(tuple(parsed)) if parsed else None

    sense_values = _check_block(top["sense"], "sense", SENSE_FIELDS)
    if "lead" in sense_values:
        sense_values["lead"] = _build("sense.lead", LeadNetwork, **_check_block(sense_values["lead"], "sense.lead", LEAD_FIELDS))
    if "distribution" in sense_values:
        sense_values["distribution"] = _build(
            "sense.distribution", TraceBranch,
            **_check_block(sense_values["distribution"], "sense.distribution", DISTRIBUTION_FIELDS),
        )
    sense_values.setdefault("r_int", DEFAULT_R_INT_OHMS)
    sense = _build("sense", SenseNetwork, **sense_values)

    sweep = Band()
    if "sweep" in top:
        sweep = _build("sweep", lambda **kw: Band(**{**asdict(Band()), **kw}), **_check_block(top["sweep"], "sweep", SWEEP_FIELDS))

    step = None
    if "step" in top:
        defaults = asdict(DEFAULT_LOAD_STEP)
        step = _build("step", lambda **kw: LoadStep(**{**defaults, **kw}), **_check_block(top["step"], "step", STEP_FIELDS))

    return AnalysisConfig(
        template=template,
        sense=sense,
        bank=bank,
        sweep=sweep,
        step=step,
        setpoint_volts=top.get("setpoint_volts"),
        name=top.get("name"),
    )


def load_config(path: str) -> AnalysisConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc.msg}", line=exc.lineno) from exc
    config = parse_config(raw)
    logger.info(f"loaded config {config.name or path}")
    return config


def config_to_dict(config: AnalysisConfig) -> Dict[str, Any]:
    out: Dict[str, Any] = {"schema": CONFIG_SCHEMA_VERSION}
    if config.name is not None:
        out["name"] = config.name
    if config.setpoint_volts is not None:
        out["setpoint_volts"] = config.setpoint_volts
    out["regulator"] = asdict(config.template)
    if config.bank is not None:
        out["bank"] = [{**asdict(branch), "count": count} for branch, count in config.bank.entries]
    sense = {"load_r": config.sense.load_r, "r_int": config.sense.r_int}
    if config.sense.lead is not None:
        sense["lead"] = asdict(config.sense.lead)
    sense["distribution"] = asdict(config.sense.distribution)
    out["sense"] = sense
    out["sweep"] = asdict(config.sweep)
    if config.step is not None:
        out["step"] = asdict(config.step)
    return out


def dump_config(config: AnalysisConfig, path: str):
    with open(path, "w") as f:
        json.dump(config_to_dict(config), f, indent=2)
        f.write("\n")


@dataclass(frozen=True, eq=False)
class MeasuredLoopGain:
    frame: pd.DataFrame

    @property
    def bode(self) -> BodeData:
        # instruments may wrap or report the phase on any 360 degree branch
        return BodeData(
            self.frame["freq_hz"].to_numpy(),
            self.frame["mag_db"].to_numpy(),
            lag_branch(unwrap_phase_deg(self.frame["phase_deg"].to_numpy())),
        )


def read_measured(path: str) -> MeasuredLoopGain:
    try:
        with open(path) as f:
            header = f.readline().strip()
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"malformed CSV {path}: {exc}") from exc
    if header != ",".join(BODE_CSV_HEADER):
        raise ParseError(f"expected header {','.join(BODE_CSV_HEADER)!r}, got {header!r}", line=1)
    if len(raw) < 2:
        raise ParseError(f"need at least 2 data rows, got {len(raw)}", line=len(raw) + 2)

    columns = {name: np.empty(len(raw)) for name in BODE_CSV_HEADER}
    for row, values in enumerate(raw[BODE_CSV_HEADER].itertuples(index=False)):
        for name, text in zip(BODE_CSV_HEADER, values):
            try:
                columns[name][row] = float(text)
            except ValueError:
                raise ParseError(f"{name} is not a number: {text!r}", line=row + 2) from None
            if not math.isfinite(columns[name][row]) and name != "mag_db":
                raise ParseError(f"{name} must be finite, got {text!r}", line=row + 2)

    freqs = columns["freq_hz"]
    if np.any(freqs <= 0):
        raise ParseError("frequencies must be positive", line=int(np.flatnonzero(freqs <= 0)[0]) + 2)
    bad = np.flatnonzero(np.diff(freqs) <= 0)
    if bad.size:
        raise NonMonotonicFrequency(f"line {int(bad[0]) + 3}: frequency {freqs[bad[0] + 1]} does not increase")
    return MeasuredLoopGain(pd.DataFrame(columns))


def import_measured(path: str):
    """Reads a measured loop-gain CSV and extracts its margins."""
    measured = read_measured(path)
    return measured, margins(measured.bode)
