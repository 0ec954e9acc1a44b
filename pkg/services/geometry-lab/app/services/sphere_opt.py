"""
Multistart optimisation of a norm over the Euclidean sphere of a subspace.

Minimises or maximises ``z ↦ ‖F z‖_K`` over |z| = 1 for an n×l frame F.
All restarts advance together as one batch: Riemannian gradient (tangent
projection), retraction by normalisation, per-restart step halving on
rejected steps and growth on accepted ones. Polytopal norms (ℓ1, ℓ∞) are
replaced by smooth upper approximations whose smoothing is decreased in
stages; the exact norm decides the reported optimum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from common.errors import InvalidParameterError
from contracts.records import SeedSpec

from app.core.config import DEFAULT_RESTARTS, OPT_MAX_ITER, OPT_TOL, RESTART_GAP_TOL
from app.services.bodies import ConvexBody, LpBall
from app.services.sampling import sample_sphere

logger = logging.getLogger(__name__)

_INITIAL_STEP = 0.25
_MAX_STEP = 4.0
_MIN_STEP = 1e-15
_GROWTH = 1.5
_MIN_STAGE_ITER = 50
# relative smoothing levels; the last stage is accurate far below OPT_TOL-scale gaps
_SMOOTHING_LEVELS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10)


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = DEFAULT_RESTARTS
    tol: float = OPT_TOL
    max_iter: int = OPT_MAX_ITER

    def __post_init__(self) -> None:
        if self.restarts < 1:
            raise InvalidParameterError("restarts must be at least 1")
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class SphereOptResult:
    value: float
    point: np.ndarray
    second_best: float
    restarts: int
    iterations: int
    converged: bool

    @property
    def gap(self) -> float:
        """Relative disagreement between the best and second-best restart."""
        return abs(self.second_best - self.value) / max(abs(self.value), 1e-300)

    @property
    def consistent(self) -> bool:
        return self.gap <= RESTART_GAP_TOL


def minimize_on_sphere(
    body: ConvexBody, frame: np.ndarray, config: OptimizerConfig, seed: SeedSpec
) -> SphereOptResult:
    return _optimize(body, np.asarray(frame, dtype=float), config, seed, sign=1.0)


def maximize_on_sphere(
    body: ConvexBody, frame: np.ndarray | None, config: OptimizerConfig, seed: SeedSpec
) -> SphereOptResult:
    """``frame=None`` searches the whole sphere S^{n-1}."""
    frame = np.eye(body.n) if frame is None else np.asarray(frame, dtype=float)
    return _optimize(body, frame, config, seed, sign=-1.0)


# ── Internal ──────────────────────────────────────────────────────────


def _smoothing_divisor(body: ConvexBody) -> float | None:
    """Worst-case excess of the smoothed norm per unit of μ; None for smooth bodies."""
    if isinstance(body, LpBall):
        if math.isinf(body.p):
            return math.log(2.0 * body.n)
        if body.p == 1.0:
            return float(body.n)
    return None


def _optimize(
    body: ConvexBody, frame: np.ndarray, config: OptimizerConfig, seed: SeedSpec, sign: float
) -> SphereOptResult:
    l = frame.shape[1]
    if l == 1:
        u = frame[:, 0].copy()
        v = float(body.norm(u))
        return SphereOptResult(value=v, point=u, second_best=v, restarts=1, iterations=0, converged=True)

    z = sample_sphere(l, seed.child("restarts"), size=config.restarts)
    best_val = np.asarray(body.norm(z @ frame.T), dtype=float)
    best_z = z.copy()

    divisor = _smoothing_divisor(body)
    levels: tuple[float | None, ...] = _SMOOTHING_LEVELS if divisor is not None else (None,)
    budget = max(_MIN_STAGE_ITER, config.max_iter // len(levels))

    iterations = 0
    finished = np.zeros(config.restarts, dtype=bool)
    for level in levels:
        mu = 1.0 if level is None else level * float(np.median(best_val)) / divisor
        z, finished, used = _descend(body, frame, z, mu, sign, config.tol, budget)
        iterations += used
        exact = np.asarray(body.norm(z @ frame.T), dtype=float)
        better = sign * (best_val - exact) > 0.0
        best_val = np.where(better, exact, best_val)
        best_z[better] = z[better]

    order = np.argsort(sign * best_val, kind="stable")
    best_idx = int(order[0])
    second = float(best_val[order[1]]) if config.restarts > 1 else float(best_val[best_idx])
    result = SphereOptResult(
        value=float(best_val[best_idx]),
        point=best_z[best_idx] @ frame.T,
        second_best=second,
        restarts=config.restarts,
        iterations=iterations,
        converged=bool(finished[best_idx]),
    )
    if not result.converged:
        logger.warning("sphere optimizer hit its iteration budget (%d iterations, l=%d)", iterations, l)
    return result


def _descend(
    body: ConvexBody,
    frame: np.ndarray,
    z: np.ndarray,
    mu: float,
    sign: float,
    tol: float,
    budget: int,
) -> tuple[np.ndarray, np.ndarray, int]:
    """One smoothing stage of batched projected gradient; returns (z, finished, iterations)."""
    z = z.copy()
    restarts = z.shape[0]
    step = np.full(restarts, _INITIAL_STEP)
    active = np.ones(restarts, dtype=bool)

    def _evaluate(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        value, grad_x = body.smoothed(points @ frame.T, mu)
        return np.asarray(value, dtype=float), grad_x @ frame

    value, grad = _evaluate(z)
    used = 0
    for used in range(1, budget + 1):
        tangent = grad - np.sum(grad * z, axis=1, keepdims=True) * z
        tangent_norm = np.linalg.norm(tangent, axis=1)

        candidate = z - sign * step[:, None] * tangent
        candidate /= np.linalg.norm(candidate, axis=1, keepdims=True)
        cand_value, cand_grad = _evaluate(candidate)

        gain = sign * (value - cand_value)
        accept = active & (gain > 0.0)
        z[accept] = candidate[accept]
        value[accept] = cand_value[accept]
        grad[accept] = cand_grad[accept]

        step = np.where(accept, np.minimum(step * _GROWTH, _MAX_STEP), np.where(active, step * 0.5, step))
        relative_gain = gain / np.maximum(np.abs(value), 1e-300)
        done = (accept & (relative_gain < tol)) | (step < _MIN_STEP) | (tangent_norm <= tol)
        active &= ~done
        if not active.any():
            break
    return z, ~active, used
