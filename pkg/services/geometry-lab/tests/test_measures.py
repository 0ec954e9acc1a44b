"""
Unit tests – Gaussian measure of dilates.

Coverage:
  - Analytic cube and Euclidean-ball values against closed forms
  - Monte Carlo provider against the analytic values (4σ)
  - Log-space paths far into the tails
  - Method selection and errors: incompatible bodies, unknown methods, bad scales
  - Surrogate bracket ordering and agreement with the direct estimate
"""

import math

import numpy as np
import pytest
from scipy.special import erf, erfc

from common.errors import MeasureMethodError
from contracts.records import Method

from app.services.bodies import cross_polytope, cube, euclidean_ball
from app.services.estimators import critical_dimension, estimate_M, sphere_norms
from app.services.measures import (
    MeasureMethod,
    gaussian_measure,
    get_measure_provider,
    log_gaussian_measure,
    surrogate_bracket,
)


# ═══════════════════════════════════════════════════════════════════════
#  Analytic paths
# ═══════════════════════════════════════════════════════════════════════


def test_cube_unit_dilate_in_plane(seed):
    """γ([-1, 1]^2) = erf(1/√2)^2 ≈ 0.46607."""
    est = gaussian_measure(cube(2), 1.0, MeasureMethod.ANALYTIC_CUBE, seed)
    assert est.is_exact
    assert est.value == pytest.approx(0.46607, abs=1e-5)


def test_euclidean_ball_in_plane(seed):
    """γ(s·D^2) = 1 − e^{−s²/2}."""
    for s in (0.5, 1.0, 2.0):
        est = gaussian_measure(euclidean_ball(2), s, "AnalyticEuclideanBall", seed)
        assert est.value == pytest.approx(1.0 - math.exp(-s * s / 2.0), rel=1e-12)


def test_auto_method_prefers_analytic(seed):
    assert gaussian_measure(cube(3), 1.0, None, seed).method is Method.ANALYTIC
    assert gaussian_measure(euclidean_ball(3), 1.0, None, seed).method is Method.ANALYTIC
    assert gaussian_measure(cross_polytope(3), 1.0, None, seed, samples=2_000).method is Method.MONTE_CARLO


def test_zero_scale_is_exact_zero(seed):
    for body in (cube(4), euclidean_ball(4), cross_polytope(4)):
        est = gaussian_measure(body, 0.0, None, seed)
        assert est.value == 0.0 and est.is_exact


def test_measure_increases_with_scale(seed):
    values = [gaussian_measure(cube(16), s, None, seed).value for s in (0.5, 1.0, 2.0, 4.0)]
    assert values == sorted(values)
    assert values[-1] < 1.0


# ═══════════════════════════════════════════════════════════════════════
#  Monte Carlo provider
# ═══════════════════════════════════════════════════════════════════════


def test_monte_carlo_matches_analytic_cube(seed):
    analytic = gaussian_measure(cube(2), 1.0, MeasureMethod.ANALYTIC_CUBE, seed)
    mc = gaussian_measure(cube(2), 1.0, MeasureMethod.MONTE_CARLO, seed, samples=200_000)
    assert mc.method is Method.MONTE_CARLO
    assert abs(mc.value - analytic.value) <= 4.0 * mc.stderr


def test_monte_carlo_matches_analytic_ball(seed):
    s = math.sqrt(6.0)
    analytic = gaussian_measure(euclidean_ball(6), s, None, seed)
    mc = gaussian_measure(euclidean_ball(6), s, "MonteCarlo", seed, samples=100_000)
    assert abs(mc.value - analytic.value) <= 4.0 * mc.stderr


@pytest.mark.parametrize("make_body", [cube, euclidean_ball], ids=["cube", "ball"])
@pytest.mark.parametrize("n", [2, 8, 32])
@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
def test_monte_carlo_matches_analytic_across_scales(seed, make_body, n, s):
    """γ(s√n K) by sampling agrees with the closed form within 4σ (plus 3/N for near-degenerate masses)."""
    body = make_body(n)
    samples = 50_000
    scale = s * math.sqrt(n)
    p = gaussian_measure(body, scale, None, seed).value
    mc = gaussian_measure(body, scale, MeasureMethod.MONTE_CARLO, seed, samples=samples)
    assert abs(mc.value - p) <= 4.0 * math.sqrt(p * (1.0 - p) / samples) + 3.0 / samples


def test_monte_carlo_deterministic(seed):
    a = gaussian_measure(cross_polytope(5), 2.0, None, seed, samples=5_000)
    b = gaussian_measure(cross_polytope(5), 2.0, None, seed, samples=5_000)
    assert a.value == b.value


# ═══════════════════════════════════════════════════════════════════════
#  Log space
# ═══════════════════════════════════════════════════════════════════════


def test_log_measure_small_scale_high_dimension():
    value = log_gaussian_measure(cube(1024), 0.5)
    assert value == pytest.approx(1024 * math.log(erf(0.5 / math.sqrt(2.0))), rel=1e-12)
    assert value < -700.0


def test_log_measure_large_scale_keeps_precision():
    value = log_gaussian_measure(cube(1024), 10.0)
    assert value < 0.0
    assert value == pytest.approx(1024 * math.log1p(-erfc(10.0 / math.sqrt(2.0))), rel=1e-9)


def test_log_measure_ball_matches_direct():
    assert math.exp(log_gaussian_measure(euclidean_ball(2), 1.0)) == pytest.approx(1.0 - math.exp(-0.5))


def test_log_measure_zero_scale():
    assert log_gaussian_measure(cube(3), 0.0) == -math.inf


# ═══════════════════════════════════════════════════════════════════════
#  Errors
# ═══════════════════════════════════════════════════════════════════════


def test_analytic_cube_on_ball_rejected(seed):
    with pytest.raises(MeasureMethodError):
        gaussian_measure(euclidean_ball(3), 1.0, MeasureMethod.ANALYTIC_CUBE, seed)


def test_analytic_ball_on_cross_polytope_rejected(seed):
    with pytest.raises(MeasureMethodError):
        gaussian_measure(cross_polytope(3), 1.0, MeasureMethod.ANALYTIC_EUCLIDEAN_BALL, seed)


def test_unknown_method_rejected():
    with pytest.raises(MeasureMethodError):
        get_measure_provider("Quadrature")


def test_negative_scale_rejected(seed):
    with pytest.raises(ValueError):
        gaussian_measure(cube(3), -1.0, None, seed)


def test_log_measure_needs_analytic_body():
    with pytest.raises(MeasureMethodError):
        log_gaussian_measure(cross_polytope(3), 1.0)


# ═══════════════════════════════════════════════════════════════════════
#  Surrogate bracket
# ═══════════════════════════════════════════════════════════════════════


def test_bracket_ordering():
    bracket = surrogate_bracket(cube(64), 0.15)
    assert bracket.log_lower <= bracket.log_centre <= bracket.log_upper <= 0.0
    assert bracket.log_half_width >= 0.0
    assert bracket.log_lower <= bracket.log_midpoint <= bracket.log_upper


def test_bracket_rejects_non_positive_t():
    with pytest.raises(ValueError):
        surrogate_bracket(cube(4), 0.0)


def test_bracket_needs_analytic_body():
    with pytest.raises(MeasureMethodError):
        surrogate_bracket(cross_polytope(4), 0.5)


def test_surrogate_agrees_with_direct_estimate(seed):
    """cube n=16, ε=0.9: direct Monte Carlo and the surrogate agree within 4 joint stderr."""
    body = cube(16)
    samples = 50_000
    M = estimate_M(body, samples, seed)
    t = 0.9 * M.value
    hits = int(np.count_nonzero(sphere_norms(body, samples, seed) <= t))
    p = hits / samples
    d_direct = -math.log(p)
    d_stderr = math.sqrt((1.0 - p) / (samples * p))

    bracket = surrogate_bracket(body, t)
    d_surrogate = -bracket.log_midpoint
    assert abs(d_direct - d_surrogate) <= 4.0 * (d_stderr + bracket.log_half_width)

    routed = critical_dimension(body, 1.0 / 0.9, samples, seed, M=M)
    assert routed.d.value == pytest.approx(d_direct, rel=1e-12)
