"""
Centralised QA configuration.

Every value is overridable via environment variables so CI and local
invocations share the same harness with different knobs.

Hierarchy:  env var → default here.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

# ── Paths ────────────────────────────────────────────────────────────
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
ARTIFACTS_DIR = os.getenv("QA_ARTIFACTS_DIR", os.path.join(PROJECT_ROOT, "artifacts", "qa"))
LAB_DIR = os.path.join(PROJECT_ROOT, "services", "geometry-lab")
LIB_DIRS = [os.path.join(PROJECT_ROOT, "libs", "common"), os.path.join(PROJECT_ROOT, "libs", "contracts")]

# ── Timeouts ─────────────────────────────────────────────────────────
UNIT_TIMEOUT_S = int(os.getenv("QA_UNIT_TIMEOUT", "900"))
ACCEPTANCE_TIMEOUT_S = int(os.getenv("QA_ACCEPTANCE_TIMEOUT", "3600"))
# a criterion that passes but exceeds its budget by this factor is reported as slow, not failed
BUDGET_SLACK = float(os.getenv("QA_BUDGET_SLACK", "1.5"))

# ── Determinism smoke ────────────────────────────────────────────────
DETERMINISM_SEED = int(os.getenv("QA_SEED", "20240601"))
DETERMINISM_THREADS = (1, int(os.getenv("QA_THREADS", "4")))
DETERMINISM_RUNS: list[list[str]] = [
    ["stats", "--body", "lp:inf:64", "--samples", "50000"],
    ["small-ball", "--body", "lp:1:32", "--samples", "50000"],
    ["moments", "--body", "lp:inf:32", "--samples", "50000"],
    ["sections", "--body", "lp:1:16", "--l", "3", "--subspaces", "16", "--restarts", "8"],
    ["verify", "transfer", "--n", "8,32", "--samples", "50000"],
]

# ── Coverage ─────────────────────────────────────────────────────────
COVERAGE_ENABLED = os.getenv("QA_COVERAGE", "0").lower() in ("1", "true", "yes")

# ── Unit test environment ────────────────────────────────────────────
UNIT_TEST_ENV: dict[str, str] = {
    "LOG_FORMAT": "text",
    "LOG_LEVEL": "WARNING",
    "DVLAB_THREADS": os.getenv("QA_TEST_THREADS", "1"),
}


# ── Acceptance criteria ──────────────────────────────────────────────


@dataclass(frozen=True)
class Criterion:
    """One acceptance criterion, selected from the lab test-suite by marker and keyword."""

    number: int
    title: str
    marker: str
    keyword: str
    budget_s: float


CRITERIA: list[Criterion] = [
    Criterion(
        1,
        "Exact values: Euclidean identities, coordinate sections, b for lp balls",
        "not slow",
        "lipschitz or euclidean or coordinate_section or cube_in_plane or cross_polytope_in_space or exact",
        10,
    ),
    Criterion(
        2,
        "M closed forms at n=2 and γ(cube) analytic vs Monte Carlo",
        "slow",
        "M_closed_forms or gaussian_cube_mass",
        60,
    ),
    Criterion(3, "Volume-radius identity, l1 and l∞ at n=50", "slow", "vrad_identity_at_n50", 300),
    Criterion(4, "Sphere/Gaussian transfer, lower direction", "slow", "transfer_lower_direction", 120),
    Criterion(5, "Negative moments: ordering and Hölder bound on the cube", "slow", "negative_moments_on_cube", 300),
    Criterion(
        6,
        "Upper inclusion beyond k and the lower-inclusion converse",
        "slow",
        "upper_inclusion_beyond or lower_inclusion_study",
        900,
    ),
    Criterion(7, "Cube gap: d polynomial, k logarithmic", "slow", "cube_gap_growth", 300),
    Criterion(8, "Byte-identical outputs across thread counts", "not slow", "outputs_independent_of_threads", 60),
    Criterion(9, "Optimizer against a dense angular grid", "slow", "optimizer_against_dense_grid", 300),
]
