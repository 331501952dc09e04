"""Central configuration for the p3ls package."""

import os

from dotenv import load_dotenv

# Load environment variables from a local .env file (real environment wins)
load_dotenv()

# Log level used by the command-line entry point
LOG_LEVEL = os.getenv("P3LS_LOG", "INFO").upper()

# Orthogonal key generation: "dense_qr" (reference) or "block" (faster for large m)
DEFAULT_MASK_METHOD = os.getenv("P3LS_MASK_METHOD", "dense_qr")
BLOCK_SIZE = int(os.getenv("P3LS_BLOCK_SIZE", "64"))

# Invertible masks (C_i, N, inference M) are redrawn above this condition number
MAX_MASK_CONDITION = float(os.getenv("P3LS_MAX_COND", "1e6"))
MASK_RETRIES = int(os.getenv("P3LS_MASK_RETRIES", "20"))

# P^T W is treated as singular above this condition number
ROTATION_MAX_CONDITION = float(os.getenv("P3LS_ROTATION_MAX_COND", "1e12"))

# Deflated cross products whose spectral norm falls below this fraction of the first one count as zero
RANK_TOL = 1e-10

ORTHOGONALITY_TOL = 1e-10

# Experiment defaults
DEFAULT_REPETITIONS = int(os.getenv("P3LS_DEFAULT_REPS", "100"))
QUICK_REPETITIONS = int(os.getenv("P3LS_QUICK_REPS", "10"))
DEFAULT_K_MAX = int(os.getenv("P3LS_DEFAULT_KMAX", "10"))
DEFAULT_ROWS = 1000
