# core/config.py

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Polynomial expansion and quadrature
DEFAULT_DEGREE = 4
DEFAULT_STUDY_DEGREE = 3 # robustness / practical-stability studies
DEFAULT_QUAD_POINTS = 9

# Indicators
DEFAULT_DZ = 1e-7 # finite-difference increment for tracers
DEFAULT_MC_SAMPLES = 100 # samples for the expectation-within-epsilon metric
DEFAULT_EPSILON = 0.1
SENTINEL_FLOOR = 1e-300 # eigenvalue clamp for exact-zero coefficient blocks
ALPHA_MIN_HORIZON = 1.05 # log(t) must stay well away from 0

# Integrator
DEFAULT_ABS_TOL = 1e-10
DEFAULT_REL_TOL = 1e-9
DEFAULT_INITIAL_STEP = 1e-3
DEFAULT_MAX_STEPS = 200_000
STEP_FACTOR_MIN = 0.2
STEP_FACTOR_MAX = 5.0
STEP_SAFETY = 0.9

# Three-body guards (nondimensional)
COLLISION_RADIUS = 1e-3
ESCAPE_RADIUS = 10.0
ENERGY_OFFSET = 0.03715 # E0 = E(L1) + offset

# Cartography / output
DEFAULT_GRID_SIZE = 200
MAX_EXPORT_SAMPLES = 2000 # decimation limit per realization
TOOL_VERSION = "0.3.0"

SDI_WORKERS = int(os.getenv("SDI_WORKERS", 1))
SDI_OUTPUT_DIR = os.getenv("SDI_OUTPUT_DIR", "out")
SDI_LOG_LEVEL = os.getenv("SDI_LOG_LEVEL", "INFO")
