# --- Quadrature ---
QUAD_EPSREL = 1e-9
QUAD_EPSABS = 1e-12
QUAD_LIMIT = 200
TAIL_MASS = 1e-12            # base-measure mass left beyond a truncation point
DIVERGENCE_GROWTH = 0.01     # relative growth per truncation doubling that counts as divergent
MAX_DOUBLINGS = 8

# --- Tolerances ---
NORMALIZATION_TOL = 1e-8
BISECTION_TOL = 1e-10
TILT_GRID_SIZE = 2048

# --- Support grids ---
SUPPORT_GRID_SIZE = 64       # h(theta) > 0 check on base models
POSITIVITY_GRID_SIZE = 256   # xi > 0 check in validate_change
VALIDATED_CACHE_SIZE = 256   # admissibility reports kept per ModelUseCases
GRID_TAIL = 1e-6             # grids run between these two quantile levels
GAUSS_NODES = 64

# --- Monte Carlo ---
SIGMA_LEVEL = 3.0
WALD_SIGMA_LEVEL = 4.0
DETECTION_SIGMA = 5.0
FAMILY_LEVEL = 0.01
MARGINAL_LEVEL = 0.001      # chi-square p-value a count marginal must exceed
MIN_PATHS = 100
PILOT_PATHS = 2_000
MAX_EVENTS_PER_PATH = 10_000_000
LOG_DENSITY_BAND = 5.0       # singularity probe reports the mass below -5 and above +5

# --- Stream families (disjoint per purpose) ---
FAMILY_ESTIMATE = 0
FAMILY_DIRECT = 1
FAMILY_WEIGHTED = 2
FAMILY_PILOT = 3
FAMILY_MARTINGALE = 4
FAMILY_DEGENERACY = 5
FAMILY_SINGULAR_P = 6
FAMILY_SINGULAR_Q = 7
FAMILY_SIMULATE = 8

# --- Expression language ---
CLAIM_VARIABLE = "x"
MIXING_VARIABLE = "theta"
FUNCTIONS = ("ln", "exp", "sqrt")

# --- Reports ---
REPORT_COLUMNS = (
    "scenario", "job", "quantity", "estimate", "stderr", "oracle",
    "paper_value", "verdict", "text", "seed", "paths", "horizon",
)
FLOAT_DIGITS = 17
