"""Geometry-lab configuration loaded from environment."""

from __future__ import annotations

from common.config import ARTIFACTS_DIR, env_float, env_int

SERVICE_NAME = "geometry-lab"

# ── Monte Carlo ──────────────────────────────────────────────────────
CHUNK_SIZE = env_int("DVLAB_CHUNK_SIZE", 2**14)
CI_SIGMAS = env_float("DVLAB_CI_SIGMAS", 4.0)
DEFAULT_SAMPLES = env_int("DVLAB_SAMPLES", 100_000)
DEFAULT_SEED = env_int("DVLAB_SEED", 0)
BOOTSTRAP_RESAMPLES = env_int("DVLAB_BOOTSTRAP", 200)
DIRECT_MC_MIN_HITS = env_int("DVLAB_DIRECT_MC_MIN_HITS", 10)
HEAVY_TAIL_FRACTION = env_float("DVLAB_HEAVY_TAIL_FRACTION", 0.2)
POISSON_UPPER_LEVEL = 0.95

# ── Sections / optimizer ─────────────────────────────────────────────
DEFAULT_SUBSPACES = env_int("DVLAB_SUBSPACES", 200)
DEFAULT_RESTARTS = env_int("DVLAB_RESTARTS", 50)
OPT_TOL = env_float("DVLAB_OPT_TOL", 1e-9)
OPT_MAX_ITER = env_int("DVLAB_OPT_MAX_ITER", 10_000)
RESTART_GAP_TOL = 1e-6
SECTION_SAMPLES = env_int("DVLAB_SECTION_SAMPLES", 4096)
MAX_SECTION_DIM = 32

# ── Bodies ───────────────────────────────────────────────────────────
ORACLE_CHECK_POINTS = env_int("DVLAB_ORACLE_CHECK_POINTS", 256)
ORTHONORMAL_TOL = 1e-10
GRASSMANNIAN_MAX_RESAMPLES = 16

# ── Output ───────────────────────────────────────────────────────────
LAB_ARTIFACTS_DIR = ARTIFACTS_DIR
