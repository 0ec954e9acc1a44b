"""
Centrally symmetric convex bodies given by their norms.

Handles:
  - ℓp balls with exact norms and exact Lipschitz constants b(K)
  - black-box norm oracles (sampled axiom check, degenerate bodies rejected)
  - subgradients and smooth upper approximations for the sphere optimizer
  - the ``lp:<p>:<n>`` body grammar shared by the CLI and the reports
"""

from __future__ import annotations

import abc
import logging
import math
from collections.abc import Callable

import numpy as np
from scipy.special import logsumexp, softmax

from common.errors import DimensionMismatchError, InvalidBodyError, InvalidParameterError
from contracts.records import LipschitzBound, SeedSpec

from app.core.config import ORACLE_CHECK_POINTS

logger = logging.getLogger(__name__)

_FD_STEP = 1e-7


class ConvexBody(abc.ABC):
    """Unit ball K of a norm on R^n."""

    def __init__(self, n: int, description: str = ""):
        if n < 1:
            raise InvalidBodyError(f"dimension n must be at least 1, got {n}")
        self.n = int(n)
        self.description = description

    @property
    @abc.abstractmethod
    def spec(self) -> str:
        """Canonical body string."""

    @abc.abstractmethod
    def _norm(self, x: np.ndarray) -> np.ndarray: ...

    def norm(self, x: np.ndarray) -> np.ndarray | float:
        """‖x‖_K over the last axis; a float for a single vector."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionMismatchError(f"vector of dimension {x.shape[-1]} for body {self.spec} in R^{self.n}")
        out = self._norm(x)
        return float(out) if x.ndim == 1 else out

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        """An element of ∂‖·‖ at each row of x (central differences by default)."""
        return _finite_difference_gradient(self._norm, np.asarray(x, dtype=float))

    def smoothed(self, x: np.ndarray, mu: float) -> tuple[np.ndarray, np.ndarray]:
        """Smooth upper approximation f_mu ≥ ‖·‖ and its gradient, row-wise."""
        x = np.asarray(x, dtype=float)
        return self._norm(x), self.subgradient(x)

    @property
    def is_cube(self) -> bool:
        return False

    @property
    def is_euclidean(self) -> bool:
        return False

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.spec})"


class LpBall(ConvexBody):
    """B_p^n = {x : (Σ|x_i|^p)^{1/p} ≤ 1}; p = ∞ is the cube, p = 1 the cross-polytope."""

    def __init__(self, p: float, n: int, description: str = ""):
        p = float(p)
        if math.isnan(p) or p < 1.0:
            raise InvalidBodyError("p must be ≥ 1")
        super().__init__(n, description or _default_description(p, n))
        self.p = p

    @property
    def spec(self) -> str:
        return f"lp:{format_p(self.p)}:{self.n}"

    @property
    def is_cube(self) -> bool:
        return math.isinf(self.p)

    @property
    def is_euclidean(self) -> bool:
        return self.p == 2.0

    def _norm(self, x: np.ndarray) -> np.ndarray:
        a = np.abs(x)
        if self.p == 1.0:
            return a.sum(axis=-1)
        if math.isinf(self.p):
            return a.max(axis=-1)
        if self.p == 2.0:
            return np.linalg.norm(x, axis=-1)
        # scale by the largest coordinate so a^p never overflows at large n
        m = a.max(axis=-1, keepdims=True)
        safe = np.where(m > 0.0, m, 1.0)
        inner = np.sum((a / safe) ** self.p, axis=-1)
        return np.squeeze(m, axis=-1) * inner ** (1.0 / self.p)

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.p == 1.0:
            return np.sign(x)
        if math.isinf(self.p):
            g = np.zeros_like(x)
            idx = np.argmax(np.abs(x), axis=-1)
            np.put_along_axis(g, idx[..., None], np.sign(np.take_along_axis(x, idx[..., None], axis=-1)), axis=-1)
            return g
        norms = self._norm(x)[..., None]
        safe = np.where(norms > 0.0, norms, 1.0)
        return np.sign(x) * (np.abs(x) / safe) ** (self.p - 1.0)

    def smoothed(self, x: np.ndarray, mu: float) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if math.isinf(self.p):
            both = np.concatenate([x, -x], axis=-1) / mu
            value = mu * logsumexp(both, axis=-1)
            w = softmax(both, axis=-1)
            return value, w[..., : self.n] - w[..., self.n :]
        if self.p == 1.0:
            root = np.sqrt(x * x + mu * mu)
            return root.sum(axis=-1), x / root
        return self._norm(x), self.subgradient(x)


class NormOracle(ConvexBody):
    """A black-box norm. Checked on sampled points at construction."""

    def __init__(
        self,
        n: int,
        evaluator: Callable[[np.ndarray], float],
        description: str = "oracle",
        *,
        vectorized: bool = False,
        check_points: int = ORACLE_CHECK_POINTS,
        check_seed: SeedSpec | None = None,
    ):
        super().__init__(n, description)
        self._evaluator = evaluator
        self._vectorized = vectorized
        if check_points > 0:
            problems = check_norm_axioms(self, check_points, check_seed or SeedSpec(root=0).child("oracle-check"))
            if problems:
                raise InvalidBodyError(f"oracle '{description}' is not a norm: {', '.join(problems)}")

    @property
    def spec(self) -> str:
        return f"oracle:{self.description}:{self.n}"

    def _norm(self, x: np.ndarray) -> np.ndarray:
        if self._vectorized:
            return np.asarray(self._evaluator(x), dtype=float)
        if x.ndim == 1:
            return np.asarray(float(self._evaluator(x)))
        flat = x.reshape(-1, self.n)
        out = np.fromiter((float(self._evaluator(row)) for row in flat), dtype=float, count=flat.shape[0])
        return out.reshape(x.shape[:-1])


# ── Operations ────────────────────────────────────────────────────────


def norm_eval(body: ConvexBody, x: np.ndarray) -> float | np.ndarray:
    return body.norm(x)


def subgradient(body: ConvexBody, x: np.ndarray) -> np.ndarray:
    return body.subgradient(x)


def smoothed_norm(body: ConvexBody, x: np.ndarray, mu: float) -> tuple[np.ndarray, np.ndarray]:
    if mu <= 0.0:
        raise InvalidParameterError("smoothing parameter mu must be positive")
    return body.smoothed(x, mu)


def lipschitz_constant(body: ConvexBody) -> LipschitzBound | None:
    """Exact b(K) = max of ‖·‖ on S^{n-1}; None when unknown (norm oracles)."""
    if isinstance(body, LpBall):
        if body.p <= 2.0:
            return LipschitzBound(value=body.n ** (1.0 / body.p - 0.5), exact=True)
        return LipschitzBound(value=1.0, exact=True)
    return None


def check_norm_axioms(body: ConvexBody, points: int, seed: SeedSpec, rtol: float = 1e-9) -> list[str]:
    """Sampled check of positivity, homogeneity and the triangle inequality."""
    from app.services.sampling import rng_for

    rng = rng_for(seed)
    x = rng.standard_normal((points, body.n))
    y = rng.standard_normal((points, body.n))
    lam = rng.standard_normal(points) * 3.0

    problems: list[str] = []
    nx = np.asarray(body._norm(x))
    ny = np.asarray(body._norm(y))
    scale = np.linalg.norm(x, axis=1)

    if not np.all(np.isfinite(nx)):
        problems.append("non-finite values")
        return problems
    if float(np.asarray(body._norm(np.zeros(body.n)))) != 0.0:
        problems.append("norm(0) != 0")
    if np.any(nx < 0.0):
        problems.append("negative values")
    basis = np.asarray(body._norm(np.eye(body.n)))
    if np.any(nx <= 1e-12 * scale) or np.any(basis <= 1e-12):
        problems.append("degenerate: zero on a nonzero vector")
    lam_x = np.asarray(body._norm(lam[:, None] * x))
    if np.any(np.abs(lam_x - np.abs(lam) * nx) > rtol * np.maximum(1.0, np.abs(lam) * nx)):
        problems.append("not absolutely homogeneous")
    nxy = np.asarray(body._norm(x + y))
    if np.any(nxy > (nx + ny) * (1.0 + rtol)):
        problems.append("triangle inequality violated")
    return problems


def parse_body_spec(text: str) -> LpBall:
    """Parse ``lp:<p>:<n>`` (``inf`` or ``∞`` accepted for p)."""
    parts = text.strip().split(":")
    if len(parts) != 3 or parts[0].lower() != "lp":
        raise InvalidBodyError(f"malformed body spec '{text}', expected lp:<p>:<n>")
    raw_p, raw_n = parts[1].strip().lower(), parts[2].strip()
    try:
        p = math.inf if raw_p in ("inf", "∞", "infinity") else float(raw_p)
    except ValueError as exc:
        raise InvalidBodyError(f"malformed p '{parts[1]}' in body spec '{text}'") from exc
    try:
        n = int(raw_n)
    except ValueError as exc:
        raise InvalidBodyError(f"malformed n '{raw_n}' in body spec '{text}'") from exc
    if p < 1.0 or math.isnan(p):
        raise InvalidBodyError("p must be ≥ 1")
    if n < 1:
        raise InvalidBodyError(f"n must be ≥ 1, got {n}")
    return LpBall(p, n)


def format_p(p: float) -> str:
    if math.isinf(p):
        return "inf"
    return str(int(p)) if float(p).is_integer() else repr(float(p))


def cube(n: int) -> LpBall:
    return LpBall(math.inf, n)


def cross_polytope(n: int) -> LpBall:
    return LpBall(1.0, n)


def euclidean_ball(n: int) -> LpBall:
    return LpBall(2.0, n)


# ── Internal ──────────────────────────────────────────────────────────


def _default_description(p: float, n: int) -> str:
    if math.isinf(p):
        return f"cube B_inf^{n}"
    if p == 1.0:
        return f"cross-polytope B_1^{n}"
    if p == 2.0:
        return f"Euclidean ball D^{n}"
    return f"B_{format_p(p)}^{n}"


def _finite_difference_gradient(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    g = np.empty_like(x)
    scale = np.maximum(1.0, np.linalg.norm(x, axis=-1, keepdims=True))
    h = _FD_STEP * scale
    for j in range(n):
        step = np.zeros(n)
        step[j] = 1.0
        hj = np.squeeze(h, axis=-1)
        g[..., j] = (f(x + h * step) - f(x - h * step)) / (2.0 * hj)
    return g
