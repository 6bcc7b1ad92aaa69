E24_SERIES = [
    1.0, 1.1, 1.2, 1.3, 1.5, 1.6, 1.8, 2.0,
    2.2, 2.4, 2.7, 3.0, 3.3, 3.6, 3.9, 4.3,
    4.7, 5.1, 5.6, 6.2, 6.8, 7.5, 8.2, 9.1,
]

E12_SERIES = [
    1.0, 1.2, 1.5, 1.8, 2.2, 2.7,
    3.3, 3.9, 4.7, 5.6, 6.8, 8.2,
]

STANDARD_SERIES = {
    "E24": E24_SERIES,
    "E12": E12_SERIES,
}

# Design thresholds for a supply loop
GAIN_MARGIN_TARGET_DB = 10.0
PHASE_MARGIN_TARGET_DEG = 45.0

# Margins this close to zero are reported as marginal rather than classified
MARGINAL_GM_DB = 0.1
MARGINAL_PM_DEG = 0.5

DEFAULT_F_MIN_HZ = 10.0
DEFAULT_F_MAX_HZ = 1e7
DEFAULT_POINTS_PER_DECADE = 200
MIN_POINTS_PER_DECADE = 10
MAX_REFINEMENTS = 3

DEFAULT_R_INT_OHMS = 100.0

DEFAULT_C_CANDIDATES = [
    1.0e-6,
    2.2e-6,
    4.7e-6,
    10e-6,
]

# f0 grid of the lead search, as fractions of the lowest gain crossover
F0_GRID_LOW = 0.2
F0_GRID_HIGH = 0.8
F0_GRID_POINTS = 11
F0_CROSSOVER_RATIO = 0.4

SETTLING_FRACTION = 0.05
MIN_RINGING_CROSSINGS = 3

CAP_SWEEP_LOW_F = 100e-6
CAP_SWEEP_HIGH_F = 10e-3
CAP_SWEEP_POINTS = 41

BODE_CSV_HEADER = ["freq_hz", "mag_db", "phase_deg"]
WAVEFORM_CSV_HEADER = ["time_s", "v_deviation"]
CONFIG_SCHEMA_VERSION = 1
