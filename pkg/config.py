# Global configuration constants
RUNS_DIR = "runs"

MODEL_FORMAT = "dek-model"
MODEL_FORMAT_VERSION = 1

# Log-argument clamp for the cross-entropy objective
LOG_EPSILON = 1e-12

# Fixed 20-point recall grid (0.05 step) for comparable PR-curve exports
RECALL_GRID = tuple(round(0.05 * step, 2) for step in range(1, 21))

# Recall cutoffs are computed as ceil(level * n - RECALL_SLACK)
RECALL_SLACK = 1e-9

DEFAULT_EMBEDDING_LAYERS = 2
DEFAULT_KERNEL_LAYERS = 2
DEFAULT_PAIRING_INTERVAL = 50

# SMO defaults
DEFAULT_SVM_C = 1.0
DEFAULT_SVM_TOL = 1e-3
DEFAULT_SVM_MAX_PASSES = 10_000

# RBF grid (powers of two), scanned gamma-major
DEFAULT_RBF_GAMMA_GRID = tuple(2.0 ** power for power in range(-5, 4, 2))
DEFAULT_RBF_C_GRID = tuple(2.0 ** power for power in range(-3, 10, 2))
DEFAULT_CV_FOLDS = 3

# Hard failure threshold for rejected CSV rows
MAX_REJECTED_FRACTION = 0.5
