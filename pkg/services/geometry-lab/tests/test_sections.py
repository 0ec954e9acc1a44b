"""
Unit tests – geometry of sections K ∩ E.

Coverage:
  - Diameter / inradius on coordinate and Haar sections, exact cube inradius
  - Diameter monotone along a chain of nested bodies
  - Searched values tagged as multistart estimates with their restart spread
  - Euclidean and one-dimensional sections
  - Volume radius: k = dim E, Hölder against M_E
  - Inclusion tests: inclusive boundaries, argument validation
  - L_l diameter average, Haar frames and per-section flags
"""

import math

import numpy as np
import pytest

from common.errors import DimensionMismatchError
from contracts.records import EstimateCI, Flag, Method

from app.services.bodies import LpBall, cross_polytope, cube, euclidean_ball
from app.services.estimators import estimate_M_E
from app.services.sampling import Subspace, sample_grassmannian
from app.services.sections import (
    diameter_Lk_average,
    diameters_of,
    lk_average,
    lower_inclusion_test,
    sample_sections,
    section_diameter,
    section_frames,
    section_inradius,
    section_volume_radius,
    upper_inclusion_test,
)
from app.services.sphere_opt import OptimizerConfig, minimize_on_sphere
from tests.conftest import SUBSPACES


# ═══════════════════════════════════════════════════════════════════════
#  Diameter and inradius
# ═══════════════════════════════════════════════════════════════════════


def test_coordinate_section_of_cube(seed, opt):
    """K ∩ span(e1, e2) is the square [-1, 1]^2: diameter 2√2, inradius 1."""
    E = Subspace.coordinate(6, [0, 1])
    body = cube(6)
    assert section_diameter(body, E, opt, seed).value == pytest.approx(2.0 * math.sqrt(2.0), rel=1e-7)
    inradius = section_inradius(body, E, opt, seed)
    assert inradius.value == pytest.approx(1.0)
    assert inradius.is_exact and not inradius.has(Flag.HEURISTIC_UPPER_BOUND)


def test_coordinate_section_of_cross_polytope(seed, opt):
    """K ∩ span(e1, e2) is the diamond |x|+|y| ≤ 1: diameter 2, inradius 1/√2."""
    E = Subspace.coordinate(6, [2, 4])
    body = cross_polytope(6)
    assert section_diameter(body, E, opt, seed).value == pytest.approx(2.0, rel=1e-7)
    inradius = section_inradius(body, E, opt, seed)
    assert inradius.value == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-7)
    assert inradius.has(Flag.HEURISTIC_UPPER_BOUND)


def test_cube_inradius_exact_on_haar_section(seed, opt):
    E = sample_grassmannian(12, 4, seed)
    inradius = section_inradius(cube(12), E, opt, seed)
    assert inradius.value == pytest.approx(1.0 / float(np.max(np.linalg.norm(E.frame, axis=1))), rel=1e-15)


def test_diameter_at_least_twice_inradius(seed, opt):
    for body in (cube(10), cross_polytope(10)):
        E = sample_grassmannian(10, 3, seed)
        diameter = section_diameter(body, E, opt, seed)
        inradius = section_inradius(body, E, opt, seed)
        assert diameter.value >= 2.0 * inradius.value * (1.0 - 1e-9)


def test_diameter_grows_with_the_body(seed, opt):
    """B_1 ⊂ B_1.5 ⊂ B_2 ⊂ B_4 ⊂ B_∞, so the same section's diameter is non-decreasing along the chain."""
    E = sample_grassmannian(10, 3, seed)
    chain = (cross_polytope(10), LpBall(1.5, 10), euclidean_ball(10), LpBall(4.0, 10), cube(10))
    diameters = [section_diameter(body, E, opt, seed).value for body in chain]
    for inner, outer in zip(diameters, diameters[1:]):
        assert inner <= outer * (1.0 + 1e-6)
    assert diameters[0] < diameters[-1]


def test_searched_section_values_carry_restart_spread(seed):
    body = cross_polytope(8)
    E = sample_grassmannian(8, 3, seed)
    config = OptimizerConfig(restarts=6)
    diameter = section_diameter(body, E, config, seed)
    assert diameter.method is Method.MULTISTART and not diameter.is_exact
    assert diameter.samples == 6
    result = minimize_on_sphere(body, E.frame, config, seed)
    assert diameter.value == 2.0 / result.value
    assert diameter.stderr == pytest.approx(abs(2.0 / result.second_best - 2.0 / result.value), abs=1e-15)
    inradius = section_inradius(body, E, config, seed)
    assert inradius.method is Method.MULTISTART
    assert inradius.has(Flag.HEURISTIC_UPPER_BOUND)


def test_euclidean_section_is_unit_disc(seed, opt):
    E = sample_grassmannian(7, 3, seed)
    assert section_diameter(euclidean_ball(7), E, opt, seed).value == 2.0
    assert section_inradius(euclidean_ball(7), E, opt, seed).value == 1.0


def test_one_dimensional_section_is_exact(seed, opt):
    E = sample_grassmannian(9, 1, seed)
    body = cross_polytope(9)
    length = float(body.norm(E.frame[:, 0]))
    assert section_diameter(body, E, opt, seed).value == pytest.approx(2.0 / length)
    assert section_inradius(body, E, opt, seed).value == pytest.approx(1.0 / length)


def test_section_dimension_limit(seed, opt):
    E = sample_grassmannian(40, 33, seed)
    with pytest.raises(DimensionMismatchError):
        section_diameter(cube(40), E, opt, seed)


# ═══════════════════════════════════════════════════════════════════════
#  Volume radius
# ═══════════════════════════════════════════════════════════════════════


def test_volume_radius_of_square(seed):
    """v.rad of [-1, 1]^2 is √(4/π)."""
    E = Subspace.coordinate(4, [0, 3])
    vrad = section_volume_radius(cube(4), E, 2, 100_000, seed)
    assert abs(vrad.value - 2.0 / math.sqrt(math.pi)) <= 4.0 * vrad.stderr


def test_volume_radius_of_euclidean_section(seed):
    E = sample_grassmannian(5, 3, seed)
    assert section_volume_radius(euclidean_ball(5), E, 3, 1_000, seed).value == 1.0


def test_inverse_volume_radius_below_M_E(seed):
    body = cross_polytope(10)
    E = sample_grassmannian(10, 4, seed)
    vrad = section_volume_radius(body, E, 4, 4_096, seed)
    m_e = estimate_M_E(body, E, 4_096, seed)
    assert 1.0 / vrad.value <= m_e.value * (1.0 + 1e-12)


def test_volume_radius_rejects_bad_order(seed):
    E = sample_grassmannian(5, 2, seed)
    with pytest.raises(ValueError):
        section_volume_radius(cube(5), E, 0, 1_000, seed)


# ═══════════════════════════════════════════════════════════════════════
#  Inclusion tests
# ═══════════════════════════════════════════════════════════════════════


def test_upper_inclusion_boundary_is_inclusive(seed):
    E = Subspace.coordinate(4, [0, 1])
    diameter = EstimateCI.exact(2.0)
    assert upper_inclusion_test(cube(4), E, 1.0, 1.0, diameter=diameter)
    assert not upper_inclusion_test(cube(4), E, 0.99, 1.0, diameter=diameter)


def test_lower_inclusion_boundary_is_inclusive(seed):
    E = Subspace.coordinate(4, [0, 1])
    inradius = EstimateCI.exact(0.5)
    assert lower_inclusion_test(cube(4), E, 0.5, 1.0, inradius=inradius)
    assert not lower_inclusion_test(cube(4), E, 0.51, 1.0, inradius=inradius)


def test_inclusion_tests_compute_geometry_when_missing(seed, opt):
    E = Subspace.coordinate(6, [0, 1])
    # square section: diameter 2√2, inradius 1
    assert upper_inclusion_test(cube(6), E, math.sqrt(2.0), 1.0, opt, seed)
    assert lower_inclusion_test(cube(6), E, 1.0, 1.0, opt, seed)
    assert not lower_inclusion_test(cube(6), E, 1.1, 1.0, opt, seed)


@pytest.mark.parametrize(("C", "M"), [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
def test_inclusion_tests_reject_non_positive_constants(C, M):
    E = Subspace.coordinate(4, [0, 1])
    with pytest.raises(ValueError):
        upper_inclusion_test(cube(4), E, C, M, diameter=EstimateCI.exact(1.0))
    with pytest.raises(ValueError):
        lower_inclusion_test(cube(4), E, C, M, inradius=EstimateCI.exact(1.0))


# ═══════════════════════════════════════════════════════════════════════
#  Averages and batches
# ═══════════════════════════════════════════════════════════════════════


def test_section_frames_deterministic(seed):
    a = section_frames(10, 3, 4, seed)
    b = section_frames(10, 3, 4, seed)
    assert len(a) == 4
    assert all(np.array_equal(x.frame, y.frame) for x, y in zip(a, b))
    assert not np.array_equal(a[0].frame, a[1].frame)


def test_diameter_average_euclidean_is_two(seed):
    assert diameter_Lk_average(euclidean_ball(9), 3, SUBSPACES, seed=seed).value == 2.0


def test_diameter_average_bounds(seed, opt):
    """1/√n ≤ ‖x‖∞ ≤ |x| on the sphere, so 2 ≤ diam(K ∩ E) ≤ 2√n for the cube."""
    body = cube(16)
    avg = diameter_Lk_average(body, 2, SUBSPACES, opt, seed)
    assert 2.0 - 1e-9 <= avg.value <= 2.0 * math.sqrt(16)
    assert avg.samples == SUBSPACES


def test_sample_sections_matches_average(seed, opt):
    body = cross_polytope(8)
    sections = sample_sections(body, 2, SUBSPACES, opt, seed, vrad_order=2, samples=2_048)
    assert [s.index for s in sections] == list(range(SUBSPACES))
    assert all(s.volume_radius is not None for s in sections)
    assert all(s.diameter.value >= 2.0 * s.inradius.value * (1.0 - 1e-9) for s in sections)
    avg = lk_average(diameters_of(sections), 2, seed)
    assert min(s.diameter.value for s in sections) <= avg.value <= max(s.diameter.value for s in sections)


def test_sample_sections_restart_trace(seed):
    sections = sample_sections(cube(8), 3, 4, OptimizerConfig(restarts=6), seed)
    assert all(s.restarts == 6 for s in sections)
    assert all(s.restart_gap >= 0.0 for s in sections)


def test_lk_average_rejects_empty(seed):
    with pytest.raises(ValueError):
        lk_average(np.array([]), 2, seed)
