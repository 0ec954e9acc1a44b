"""
Geometry of sections K ∩ E.

For an orthonormal frame F of E:
  diam(K ∩ E)     = 2 / min_{|z|=1} ‖F z‖_K
  inradius(K ∩ E) = 1 / max_{|z|=1} ‖F z‖_K
The cube's maximum is the largest Euclidean row norm of F, so its inradius
is exact; every other inradius comes from the multistart maximiser and is
flagged as an upper bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from common.errors import DimensionMismatchError, InvalidParameterError
from contracts.records import EstimateCI, Flag, Method, SeedSpec

from app.core.config import MAX_SECTION_DIM, SECTION_SAMPLES
from app.core.parallel import indexed_map
from app.services.bodies import ConvexBody
from app.services.estimators import power_mean, subspace_norms
from app.services.sampling import Subspace, sample_grassmannian
from app.services.sphere_opt import OptimizerConfig, SphereOptResult, maximize_on_sphere, minimize_on_sphere

logger = logging.getLogger(__name__)

_INCLUSION_RTOL = 1e-12


@dataclass(frozen=True)
class SectionGeometry:
    index: int
    subspace: Subspace
    diameter: EstimateCI
    inradius: EstimateCI
    volume_radius: EstimateCI | None = None
    vrad_order: int | None = None
    restarts: int = 0
    restart_gap: float = 0.0
    flags: tuple[Flag, ...] = field(default=())


def _check_dim(E: Subspace) -> None:
    if E.dim > MAX_SECTION_DIM:
        raise DimensionMismatchError(f"section dimension {E.dim} exceeds the supported maximum {MAX_SECTION_DIM}")


def _optimizer_flags(result: SphereOptResult) -> tuple[Flag, ...]:
    flags: list[Flag] = []
    if not result.converged:
        flags.append(Flag.OPTIMIZER_NOT_CONVERGED)
    if not result.consistent:
        flags.append(Flag.RESTART_GAP)
    return tuple(flags)


def _searched(value: float, second_best: float, result: SphereOptResult, seed: SeedSpec) -> EstimateCI:
    """A multistart result; stderr is the spread between the two best restarts."""
    return EstimateCI(
        value=value,
        stderr=abs(second_best - value),
        samples=result.restarts,
        method=Method.MULTISTART,
        seed=seed,
        flags=_optimizer_flags(result),
    )


def section_frames(n: int, l: int, count: int, seed: SeedSpec) -> list[Subspace]:
    """``count`` Haar subspaces; subspace i draws from ``seed/subspace:i``."""
    return indexed_map(lambda i: sample_grassmannian(n, l, seed.child("subspace", i)), count)


# ── Diameter and inradius ─────────────────────────────────────────────


def _diameter(
    body: ConvexBody, E: Subspace, opt_config: OptimizerConfig, seed: SeedSpec
) -> tuple[EstimateCI, SphereOptResult | None]:
    _check_dim(E)
    if body.is_euclidean:
        return EstimateCI.exact(2.0, seed=seed), None
    if E.dim == 1:
        return EstimateCI.exact(2.0 / float(body.norm(E.frame[:, 0])), seed=seed), None
    result = minimize_on_sphere(body, E.frame, opt_config, seed)
    if not result.consistent:
        logger.info("diameter restarts disagree: best %.10g, second %.10g", result.value, result.second_best)
    return _searched(2.0 / result.value, 2.0 / result.second_best, result, seed), result


def _inradius(
    body: ConvexBody, E: Subspace, opt_config: OptimizerConfig, seed: SeedSpec
) -> tuple[EstimateCI, SphereOptResult | None]:
    _check_dim(E)
    if body.is_euclidean:
        return EstimateCI.exact(1.0, seed=seed), None
    if E.dim == 1:
        return EstimateCI.exact(1.0 / float(body.norm(E.frame[:, 0])), seed=seed), None
    if body.is_cube:
        return EstimateCI.exact(1.0 / float(np.max(E.row_norms)), seed=seed), None
    result = maximize_on_sphere(body, E.frame, opt_config, seed)
    estimate = _searched(1.0 / result.value, 1.0 / result.second_best, result, seed)
    return estimate.with_flags(Flag.HEURISTIC_UPPER_BOUND), result


def section_diameter(
    body: ConvexBody, E: Subspace, opt_config: OptimizerConfig | None = None, seed: SeedSpec | None = None
) -> EstimateCI:
    return _diameter(body, E, opt_config or OptimizerConfig(), seed or SeedSpec(root=0))[0]


def section_inradius(
    body: ConvexBody, E: Subspace, opt_config: OptimizerConfig | None = None, seed: SeedSpec | None = None
) -> EstimateCI:
    return _inradius(body, E, opt_config or OptimizerConfig(), seed or SeedSpec(root=0))[0]


def section_volume_radius(
    body: ConvexBody, E: Subspace, k: int, samples: int = SECTION_SAMPLES, seed: SeedSpec | None = None
) -> EstimateCI:
    """(∫_{S(E)} ‖x‖^{-k} dσ_E)^{1/k}; the true volume radius when k = dim E."""
    seed = seed or SeedSpec(root=0)
    if k < 1:
        raise InvalidParameterError(f"moment order k must be at least 1, got {k}")
    if k > E.dim:
        logger.warning("volume-radius order k=%d exceeds the section dimension %d", k, E.dim)
    if body.is_euclidean:
        return EstimateCI.exact(1.0, seed=seed)
    if E.dim == 1:
        return EstimateCI.exact(1.0 / float(body.norm(E.frame[:, 0])), seed=seed)
    moment = power_mean(subspace_norms(body, E, samples, seed), -float(k), seed)
    value = 1.0 / moment.value
    return EstimateCI(value=value, stderr=moment.stderr * value * value, samples=moment.samples, seed=seed)


def section_geometry(
    body: ConvexBody,
    E: Subspace,
    opt_config: OptimizerConfig,
    seed: SeedSpec,
    *,
    index: int = 0,
    vrad_order: int | None = None,
    samples: int = SECTION_SAMPLES,
) -> SectionGeometry:
    diameter, d_trace = _diameter(body, E, opt_config, seed.child("diameter"))
    inradius, _ = _inradius(body, E, opt_config, seed.child("inradius"))
    vrad = None
    if vrad_order is not None:
        vrad = section_volume_radius(body, E, vrad_order, samples, seed.child("vrad"))
    return SectionGeometry(
        index=index,
        subspace=E,
        diameter=diameter,
        inradius=inradius,
        volume_radius=vrad,
        vrad_order=vrad_order,
        restarts=d_trace.restarts if d_trace else 0,
        restart_gap=d_trace.gap if d_trace else 0.0,
        flags=tuple(dict.fromkeys((*diameter.flags, *inradius.flags))),
    )


def sample_sections(
    body: ConvexBody,
    l: int,
    count: int,
    opt_config: OptimizerConfig,
    seed: SeedSpec,
    *,
    vrad_order: int | None = None,
    samples: int = SECTION_SAMPLES,
) -> list[SectionGeometry]:
    """Geometry of ``count`` Haar sections, in subspace index order."""
    frames = section_frames(body.n, l, count, seed)

    def _one(i: int) -> SectionGeometry:
        return section_geometry(
            body, frames[i], opt_config, seed.child("section", i), index=i, vrad_order=vrad_order, samples=samples
        )

    sections = indexed_map(_one, count)
    if l <= 8 and sections and sections[0].restarts:
        stable = sum(1 for s in sections if s.restart_gap <= 1e-6) / len(sections)
        logger.info("restart agreement on %.1f%% of %d sections (l=%d)", 100 * stable, len(sections), l)
    return sections


# ── Inclusion tests ───────────────────────────────────────────────────


def upper_inclusion_test(
    body: ConvexBody,
    E: Subspace,
    C: float,
    M: float,
    opt_config: OptimizerConfig | None = None,
    seed: SeedSpec | None = None,
    *,
    diameter: EstimateCI | None = None,
) -> bool:
    """K ∩ E ⊂ (C/M)(D^n ∩ E), i.e. diam ≤ 2C/M (inclusive)."""
    if C <= 0.0 or M <= 0.0:
        raise InvalidParameterError("C and M must be positive")
    diameter = diameter or section_diameter(body, E, opt_config, seed)
    return diameter.value <= (2.0 * C / M) * (1.0 + _INCLUSION_RTOL)


def lower_inclusion_test(
    body: ConvexBody,
    E: Subspace,
    c: float,
    M: float,
    opt_config: OptimizerConfig | None = None,
    seed: SeedSpec | None = None,
    *,
    inradius: EstimateCI | None = None,
) -> bool:
    """(c/M)(D^n ∩ E) ⊂ K ∩ E, i.e. inradius ≥ c/M (inclusive)."""
    if c <= 0.0 or M <= 0.0:
        raise InvalidParameterError("c and M must be positive")
    inradius = inradius or section_inradius(body, E, opt_config, seed)
    return inradius.value >= (c / M) * (1.0 - _INCLUSION_RTOL)


# ── Averages over the Grassmannian ────────────────────────────────────


def diameter_Lk_average(
    body: ConvexBody,
    l: int,
    num_subspaces: int,
    opt_config: OptimizerConfig | None = None,
    seed: SeedSpec | None = None,
) -> EstimateCI:
    """(mean over Haar E of diam(K ∩ E)^l)^{1/l}; any optimizer flag carries over."""
    seed = seed or SeedSpec(root=0)
    if l < 1:
        raise InvalidParameterError(f"section dimension l must be at least 1, got {l}")
    if num_subspaces < 1:
        raise InvalidParameterError("num_subspaces must be at least 1")
    if body.is_euclidean:
        return EstimateCI.exact(2.0, seed=seed)
    config = opt_config or OptimizerConfig()
    frames = section_frames(body.n, l, num_subspaces, seed)
    results = indexed_map(lambda i: _diameter(body, frames[i], config, seed.child("diameter", i))[0], num_subspaces)
    diameters = np.array([r.value for r in results])
    flags = tuple(dict.fromkeys(f for r in results for f in r.flags))
    return power_mean(diameters, float(l), seed).with_flags(*flags)


def diameters_of(sections: list[SectionGeometry]) -> np.ndarray:
    return np.array([s.diameter.value for s in sections])


def lk_average(values: np.ndarray, l: int, seed: SeedSpec) -> EstimateCI:
    """L_l power mean of per-section values with delta-method stderr."""
    if values.size == 0 or math.isnan(float(np.sum(values))):
        raise InvalidParameterError("no section values to average")
    return power_mean(values, float(l), seed)
