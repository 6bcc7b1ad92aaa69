from .modeling_utils import *
from .modeling_tf import (
    FrequencyResponse,
    Polynomial,
    TransferFunction,
    add,
    as_tf,
    characteristic_polynomial,
    constant,
    dc_value,
    evaluate,
    evaluate_many,
    evaluate_s,
    feedback_close,
    frequency_response,
    mul,
    poles,
    polynomial_from_roots,
    polynomial_roots,
    reciprocal,
    scale,
    scale_frequency,
    sub,
    tf,
    zeros,
)
from .modeling_pdn import (
    CapBank,
    CapBranch,
    TraceBranch,
    bank_impedance,
    branch_impedance,
    distribution_transfer,
    load_network,
    parallel,
    resistor,
    series,
    total_capacitance,
    trace_impedance,
    voltage_divider,
)
from .modeling_regulator import (
    LeadNetwork,
    LoopModel,
    RegulatorTemplate,
    SenseNetwork,
    build_forward_path,
    build_loop_model,
    closed_loop_output_impedance,
    closed_loop_ref_to_out,
    lead_sense_transfer,
    loop_gain,
    open_loop_output_impedance,
    sense_transfer,
    with_lead,
)
