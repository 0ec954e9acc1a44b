"""
Monte Carlo and analytic estimators of the scalar functionals of a body.

All functionals of one (body, samples, seed) triple are computed from the
same chunked sample of sphere norms (:func:`sphere_norms`), so inequalities
that hold pointwise, such as the power-mean chain, hold exactly on the
sample and not just in expectation. Thresholds relative to M use the point
estimate handed in by the caller; M is never resampled inside a curve.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from functools import lru_cache

import numpy as np
from scipy import stats as st
from scipy.special import logsumexp

from common.errors import HeuristicDisabledError, InvalidParameterError, NumericalOverflowError
from contracts.records import (
    BodyStats,
    ConcentrationProfile,
    CriticalDimension,
    DvoretzkyDimension,
    EstimateCI,
    Flag,
    LipschitzBound,
    Method,
    Route,
    SeedSpec,
    SmallBallCurve,
)

from app.core.config import (
    BOOTSTRAP_RESAMPLES,
    CHUNK_SIZE,
    DEFAULT_SAMPLES,
    DIRECT_MC_MIN_HITS,
    HEAVY_TAIL_FRACTION,
    POISSON_UPPER_LEVEL,
)
from app.core.parallel import chunked_map
from app.services.bodies import ConvexBody, lipschitz_constant
from app.services.measures import surrogate_bracket
from app.services.sampling import Subspace, rng_for, sample_sphere, sample_subspace_sphere
from app.services.sphere_opt import OptimizerConfig, maximize_on_sphere

logger = logging.getLogger(__name__)

_MIN_MEDIAN_SAMPLES = 100


# ── Norm samples ──────────────────────────────────────────────────────


def sphere_norms(body: ConvexBody, samples: int, seed: SeedSpec) -> np.ndarray:
    """‖x_i‖ for ``samples`` uniform sphere points, in chunk order (read-only)."""
    if samples < 1:
        raise InvalidParameterError("samples must be at least 1")
    return _sphere_norms_cached(body, int(samples), seed)


@lru_cache(maxsize=8)
def _sphere_norms_cached(body: ConvexBody, samples: int, seed: SeedSpec) -> np.ndarray:
    def _chunk(chunk_seed: SeedSpec, count: int) -> np.ndarray:
        return np.asarray(body.norm(sample_sphere(body.n, chunk_seed, size=count)), dtype=float)

    norms = np.concatenate(chunked_map(_chunk, samples, seed))
    norms.setflags(write=False)
    return norms


def subspace_norms(body: ConvexBody, subspace: Subspace, samples: int, seed: SeedSpec) -> np.ndarray:
    if samples < 1:
        raise InvalidParameterError("samples must be at least 1")

    def _chunk(chunk_seed: SeedSpec, count: int) -> np.ndarray:
        return np.asarray(body.norm(sample_subspace_sphere(subspace, chunk_seed, size=count)), dtype=float)

    return np.concatenate(chunked_map(_chunk, samples, seed))


def _chunk_seed_of(seed: SeedSpec, index: int) -> str:
    return seed.child("chunk", index // CHUNK_SIZE).path_str


def mean_estimate(values: np.ndarray, seed: SeedSpec) -> EstimateCI:
    n = values.size
    stderr = float(np.std(values, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    return EstimateCI(value=float(np.mean(values)), stderr=stderr, samples=n, seed=seed)


def power_mean(values: np.ndarray, order: float, seed: SeedSpec) -> EstimateCI:
    """(mean x^order)^{1/order} in log space, delta-method stderr."""
    n = values.size
    with np.errstate(divide="ignore"):
        logs = np.log(values)
    if not np.all(np.isfinite(logs)):
        bad = int(np.flatnonzero(~np.isfinite(logs))[0])
        detail = f"norm {values[bad]!r} at sample {bad} has no finite power"
        raise NumericalOverflowError(detail, _chunk_seed_of(seed, bad))
    scaled = order * logs
    log_m = float(logsumexp(scaled)) - math.log(n)
    value = math.exp(log_m / order)
    if not math.isfinite(value) or value == 0.0:
        worst = int(np.argmax(np.abs(scaled)))
        raise NumericalOverflowError(f"moment of order {order} overflowed", _chunk_seed_of(seed, worst))
    ratios = np.exp(scaled - log_m)
    rel = math.sqrt(max(float(np.var(ratios, ddof=1)), 0.0) / n) if n > 1 else 0.0
    return EstimateCI(value=value, stderr=value * rel / abs(order), samples=n, seed=seed)


def _log_mean_estimate(values: np.ndarray, seed: SeedSpec) -> EstimateCI:
    logs = np.log(values)
    n = values.size
    value = math.exp(float(np.mean(logs)))
    stderr = value * float(np.std(logs, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    return EstimateCI(value=value, stderr=stderr, samples=n, seed=seed)


def _bernoulli(hits: int, samples: int, seed: SeedSpec) -> EstimateCI:
    """Indicator mean; an unobserved event reports the rule-of-three bound 3/N."""
    if hits == 0:
        return EstimateCI(value=3.0 / samples, stderr=0.0, samples=samples, seed=seed, flags=(Flag.RULE_OF_THREE,))
    p = hits / samples
    return EstimateCI(value=p, stderr=math.sqrt(p * (1.0 - p) / samples), samples=samples, seed=seed)


def _bernoulli_curve(hits: Sequence[int], samples: int, seed: SeedSpec) -> tuple[EstimateCI, ...]:
    """Indicator means along a nested family of events.

    Unobserved cells sit at the rare end of the family; their rule-of-three bound is
    capped by the rarest observed cell so the probabilities keep the order of the hits.
    """
    probs = [_bernoulli(h, samples, seed) for h in hits]
    observed = [p.value for p, h in zip(probs, hits) if h > 0]
    if not observed:
        return tuple(probs)
    cap = min(observed)
    return tuple(p.model_copy(update={"value": min(p.value, cap)}) if h == 0 else p for p, h in zip(probs, hits))


def _slope(x: Sequence[float], y: Sequence[float]) -> float | None:
    if len(x) < 2 or len(set(x)) < 2:
        return None
    return float(st.linregress(x, y).slope)


# ── Body functionals ──────────────────────────────────────────────────


def estimate_M(body: ConvexBody, samples: int = DEFAULT_SAMPLES, seed: SeedSpec | None = None) -> EstimateCI:
    seed = seed or SeedSpec(root=0)
    if body.is_euclidean:
        return EstimateCI.exact(1.0, seed=seed)
    return mean_estimate(sphere_norms(body, samples, seed), seed)


def estimate_median(body: ConvexBody, samples: int = DEFAULT_SAMPLES, seed: SeedSpec | None = None) -> EstimateCI:
    """Empirical median of the norm; bootstrap standard error."""
    seed = seed or SeedSpec(root=0)
    if samples < _MIN_MEDIAN_SAMPLES:
        raise InvalidParameterError(f"median needs at least {_MIN_MEDIAN_SAMPLES} samples, got {samples}")
    if body.is_euclidean:
        return EstimateCI.exact(1.0, seed=seed)
    norms = sphere_norms(body, samples, seed)
    rng = rng_for(seed.child("bootstrap"))
    boots = np.empty(BOOTSTRAP_RESAMPLES)
    for i in range(BOOTSTRAP_RESAMPLES):
        boots[i] = np.median(norms[rng.integers(0, norms.size, norms.size)])
    stderr = float(np.std(boots, ddof=1)) if BOOTSTRAP_RESAMPLES > 1 else 0.0
    return EstimateCI(value=float(np.median(norms)), stderr=stderr, samples=norms.size, seed=seed)


def heuristic_lipschitz(
    body: ConvexBody, config: OptimizerConfig | None = None, seed: SeedSpec | None = None
) -> LipschitzBound:
    """Multistart maximisation of the norm on S^{n-1}; a lower bound on b(K)."""
    seed = seed or SeedSpec(root=0)
    result = maximize_on_sphere(body, None, config or OptimizerConfig(), seed.child("lipschitz"))
    logger.warning("b(K) for %s is a heuristic lower bound: %.6g", body.spec, result.value)
    return LipschitzBound(value=result.value, exact=False)


def body_stats(
    body: ConvexBody,
    samples: int = DEFAULT_SAMPLES,
    seed: SeedSpec | None = None,
    *,
    allow_heuristic: bool = True,
    opt_config: OptimizerConfig | None = None,
) -> BodyStats:
    seed = seed or SeedSpec(root=0)
    M = estimate_M(body, samples, seed)
    Med = estimate_median(body, samples, seed)
    b = lipschitz_constant(body)
    if b is None and allow_heuristic:
        b = heuristic_lipschitz(body, opt_config, seed)
    k = body.n * (M.value / b.value) ** 2 if b is not None else None
    return BodyStats(n=body.n, M=M, Med=Med, b=b, k=k, k_heuristic=b is not None and not b.exact)


def dvoretzky_dimension(stats: BodyStats) -> DvoretzkyDimension:
    """k(K) = n (M/b)^2; heuristic when b is."""
    if stats.b is None:
        raise HeuristicDisabledError(f"k(K) needs b(K); it is unknown for this n={stats.n} body")
    return DvoretzkyDimension(value=stats.n * (stats.M.value / stats.b.value) ** 2, heuristic=not stats.b.exact)


# ── Small-ball and large-deviation curves ─────────────────────────────


def small_ball_curve(
    body: ConvexBody,
    M: EstimateCI,
    eps_grid: Sequence[float],
    samples: int = DEFAULT_SAMPLES,
    seed: SeedSpec | None = None,
) -> SmallBallCurve:
    """σ{‖x‖ < εM̂} per ε (sorted ascending) and the log-log slope over cells with hits."""
    seed = seed or SeedSpec(root=0)
    grid = tuple(sorted(set(float(e) for e in eps_grid)))
    if any(not 0.0 < e < 1.0 for e in grid):
        raise InvalidParameterError("eps values must lie in (0, 1)")
    if body.is_euclidean:
        zeros = tuple(EstimateCI.exact(0.0, seed=seed) for _ in grid)
        return SmallBallCurve(eps_grid=grid, probs=zeros, hits=tuple(0 for _ in grid))

    ordered = np.sort(sphere_norms(body, samples, seed))
    hits = [int(np.searchsorted(ordered, e * M.value, side="left")) for e in grid]
    probs = _bernoulli_curve(hits, samples, seed)
    observed = [(math.log(e), math.log(h / samples)) for e, h in zip(grid, hits) if h > 0]
    slope = _slope([x for x, _ in observed], [y for _, y in observed])
    for e, h in zip(grid, hits):
        logger.debug("small-ball eps=%.3g hits=%d/%d", e, h, samples)
    return SmallBallCurve(eps_grid=grid, probs=probs, hits=tuple(hits), fitted_exponent=slope)


def concentration_profile(
    body: ConvexBody,
    t_grid: Sequence[float],
    samples: int = DEFAULT_SAMPLES,
    seed: SeedSpec | None = None,
    *,
    M: EstimateCI | None = None,
    k: float | None = None,
) -> ConcentrationProfile:
    """σ{|‖x‖ − M̂| > tM̂} per t; decay fitted as −log σ ≈ c·t²k through the origin."""
    seed = seed or SeedSpec(root=0)
    grid = tuple(sorted(set(float(t) for t in t_grid)))
    if any(t <= 0.0 for t in grid):
        raise InvalidParameterError("t values must be positive")
    if body.is_euclidean:
        zeros = tuple(EstimateCI.exact(0.0, seed=seed) for _ in grid)
        return ConcentrationProfile(t_grid=grid, probs=zeros, hits=tuple(0 for _ in grid), k=k)

    M = M or estimate_M(body, samples, seed)
    ordered = np.sort(sphere_norms(body, samples, seed))
    hits = []
    for t in grid:
        below = int(np.searchsorted(ordered, M.value * (1.0 - t), side="left"))
        above = ordered.size - int(np.searchsorted(ordered, M.value * (1.0 + t), side="right"))
        hits.append(below + above)
    probs = _bernoulli_curve(hits, samples, seed)

    decay = None
    if k is not None:
        xs = np.array([t * t * k for t, h in zip(grid, hits) if h > 0])
        ys = np.array([-math.log(h / samples) for h in hits if h > 0])
        if xs.size and float(np.dot(xs, xs)) > 0.0:
            decay = float(np.dot(xs, ys) / np.dot(xs, xs))
    return ConcentrationProfile(t_grid=grid, probs=probs, hits=tuple(hits), k=k, fitted_decay=decay)


def critical_dimension(
    body: ConvexBody,
    u: float = 2.0,
    samples: int = DEFAULT_SAMPLES,
    seed: SeedSpec | None = None,
    *,
    M: EstimateCI | None = None,
) -> CriticalDimension:
    """d_u(K) = min(−log σ{‖x‖ ≤ M/u}, n), routed by how observable the event is."""
    seed = seed or SeedSpec(root=0)
    if not u > 1.0:
        raise InvalidParameterError(f"u must be greater than 1, got {u}")
    n = body.n
    if body.is_euclidean:
        return CriticalDimension(
            u=u, d=EstimateCI.exact(float(n), seed=seed), estimator_route=Route.ANALYTIC, n=n, event_probability=0.0
        )

    M = M or estimate_M(body, samples, seed)
    t = M.value / u
    norms = sphere_norms(body, samples, seed)
    hits = int(np.count_nonzero(norms <= t))
    centre = None

    if hits >= DIRECT_MC_MIN_HITS:
        p = hits / samples
        d = -math.log(p)
        stderr = math.sqrt((1.0 - p) / (samples * p))
        route, method, flags = Route.DIRECT_MC, Method.MONTE_CARLO, ()
    elif body.is_cube:
        bracket = surrogate_bracket(body, t)
        p = math.exp(bracket.log_midpoint)
        d = -bracket.log_midpoint
        stderr = bracket.log_half_width
        centre = -bracket.log_centre
        route, method, flags = Route.GAUSSIAN_SURROGATE, Method.HYBRID_SURROGATE, ()
        logger.info("d_u via Gaussian surrogate: %d MC hits below %.4g, bracket half-width %.3g", hits, t, stderr)
    else:
        # one-sided Poisson upper bound on p; at 0 hits this is ≈ 3/N
        p = float(st.chi2.ppf(POISSON_UPPER_LEVEL, 2 * (hits + 1))) / (2.0 * samples)
        d = -math.log(min(p, 1.0))
        stderr = 0.0
        route, method, flags = Route.LOWER_BOUND_RULE_OF_THREE, Method.MONTE_CARLO, (Flag.RULE_OF_THREE,)

    if d >= n:
        d, flags = float(n), (*flags, Flag.CAPPED)
    d = max(d, 1.0 / samples)
    estimate = EstimateCI(value=d, stderr=stderr, samples=samples, method=method, seed=seed, flags=flags)
    return CriticalDimension(
        u=u, d=estimate, estimator_route=route, n=n, event_probability=p, surrogate_centre=centre
    )


# ── Moments ───────────────────────────────────────────────────────────


def negative_moment(
    body: ConvexBody,
    l: float,
    samples: int = DEFAULT_SAMPLES,
    seed: SeedSpec | None = None,
    *,
    d_hat: float | None = None,
) -> EstimateCI:
    """(∫ ‖x‖^{-l} dσ)^{-1/l}; flagged heavy-tailed when l > 0.2·d̂."""
    seed = seed or SeedSpec(root=0)
    if not l > 0.0:
        raise InvalidParameterError(f"moment order l must be positive, got {l}")
    if body.is_euclidean:
        return EstimateCI.exact(1.0, seed=seed)
    estimate = power_mean(sphere_norms(body, samples, seed), -float(l), seed)
    if d_hat is not None and l > HEAVY_TAIL_FRACTION * d_hat:
        logger.warning("negative moment l=%g exceeds %.2g·d=%.3g; variance unreliable", l, HEAVY_TAIL_FRACTION, d_hat)
        estimate = estimate.with_flags(Flag.HEAVY_TAIL)
    return estimate


def positive_moment(
    body: ConvexBody, k: float, samples: int = DEFAULT_SAMPLES, seed: SeedSpec | None = None
) -> EstimateCI:
    """(∫ ‖x‖^k dσ)^{1/k}; k = 1 is the same computation as :func:`estimate_M`."""
    seed = seed or SeedSpec(root=0)
    if not k > 0.0:
        raise InvalidParameterError(f"moment order k must be positive, got {k}")
    if body.is_euclidean:
        return EstimateCI.exact(1.0, seed=seed)
    norms = sphere_norms(body, samples, seed)
    if k == 1.0:
        return mean_estimate(norms, seed)
    return power_mean(norms, float(k), seed)


def geometric_mean_norm(body: ConvexBody, samples: int = DEFAULT_SAMPLES, seed: SeedSpec | None = None) -> EstimateCI:
    """exp ∫ log‖x‖ dσ, the order-zero power mean."""
    seed = seed or SeedSpec(root=0)
    if body.is_euclidean:
        return EstimateCI.exact(1.0, seed=seed)
    return _log_mean_estimate(sphere_norms(body, samples, seed), seed)


def estimate_M_E(
    body: ConvexBody, E: Subspace, samples: int = DEFAULT_SAMPLES, seed: SeedSpec | None = None
) -> EstimateCI:
    """M_E = ∫_{S(E)} ‖x‖ dσ_E."""
    seed = seed or SeedSpec(root=0)
    if body.is_euclidean:
        return EstimateCI.exact(1.0, seed=seed)
    if E.dim == 1:
        return EstimateCI.exact(float(body.norm(E.frame[:, 0])), seed=seed)
    return mean_estimate(subspace_norms(body, E, samples, seed), seed)
