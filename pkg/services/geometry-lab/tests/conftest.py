"""Test fixtures for geometry-lab."""

import os

import pytest

os.environ["LOG_FORMAT"] = "text"
os.environ.setdefault("DVLAB_THREADS", "1")

from contracts.records import SeedSpec

from app.services.bodies import cross_polytope, cube, euclidean_ball
from app.services.sphere_opt import OptimizerConfig

# Desk budgets: large enough for 4σ checks, small enough for a quick run
SAMPLES = 20_000
SUBSPACES = 12
RESTARTS = 8


@pytest.fixture
def seed():
    return SeedSpec(root=7)


@pytest.fixture
def other_seed():
    return SeedSpec(root=11)


@pytest.fixture
def cube8():
    return cube(8)


@pytest.fixture
def cross8():
    return cross_polytope(8)


@pytest.fixture
def ball8():
    return euclidean_ball(8)


@pytest.fixture
def opt():
    return OptimizerConfig(restarts=RESTARTS)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "artifacts"
    path.mkdir()
    return path
