"""
Gaussian measure of dilates γ(s·K).

Providers:
  - ``AnalyticCube``: product of one-dimensional normal interval masses
  - ``AnalyticEuclideanBall``: chi-square CDF of the squared radius
  - ``MonteCarlo``: indicator mean over seeded standard Gaussian draws

The analytic paths also work in log space so e^{-poly(n)} masses stay
representable; the surrogate bracket for small-ball probabilities on the
sphere is built from them.
"""

from __future__ import annotations

import abc
import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfc
from scipy.stats import chi2

from common.errors import InvalidParameterError, MeasureMethodError
from contracts.records import EstimateCI, SeedSpec

from app.core.config import DEFAULT_SAMPLES
from app.core.parallel import chunked_map
from app.services.bodies import ConvexBody
from app.services.sampling import sample_gaussian

logger = logging.getLogger(__name__)


class MeasureMethod(str, enum.Enum):
    ANALYTIC_CUBE = "AnalyticCube"
    ANALYTIC_EUCLIDEAN_BALL = "AnalyticEuclideanBall"
    MONTE_CARLO = "MonteCarlo"


class GaussianMeasureProvider(abc.ABC):
    method: MeasureMethod

    def supports(self, body: ConvexBody) -> bool:
        return True

    @abc.abstractmethod
    def measure(self, body: ConvexBody, scale: float, seed: SeedSpec, samples: int) -> EstimateCI:
        """γ(scale·K) with its standard error."""
        ...

    def log_measure(self, body: ConvexBody, scale: float) -> float:
        raise MeasureMethodError(f"{self.method.value} has no log-space path")

    def _check(self, body: ConvexBody) -> None:
        if not self.supports(body):
            raise MeasureMethodError(f"{self.method.value} is not available for body {body.spec}")


class AnalyticCubeMeasure(GaussianMeasureProvider):
    """γ([-s, s]^n) = erf(s/√2)^n."""

    method = MeasureMethod.ANALYTIC_CUBE

    def supports(self, body: ConvexBody) -> bool:
        return body.is_cube

    def log_measure(self, body: ConvexBody, scale: float) -> float:
        self._check(body)
        if scale <= 0.0:
            return -math.inf
        x = scale / math.sqrt(2.0)
        # erf(x) = 1 - erfc(x); log1p keeps precision once erf is close to 1
        log_one = math.log(erf(x)) if x < 1.0 else math.log1p(-erfc(x))
        return body.n * log_one

    def measure(self, body: ConvexBody, scale: float, seed: SeedSpec, samples: int) -> EstimateCI:
        return EstimateCI.exact(math.exp(self.log_measure(body, scale)), seed=seed)


class AnalyticEuclideanBallMeasure(GaussianMeasureProvider):
    """γ(s·D^n) = P(χ²_n ≤ s²)."""

    method = MeasureMethod.ANALYTIC_EUCLIDEAN_BALL

    def supports(self, body: ConvexBody) -> bool:
        return body.is_euclidean

    def log_measure(self, body: ConvexBody, scale: float) -> float:
        self._check(body)
        if scale <= 0.0:
            return -math.inf
        return float(chi2.logcdf(scale * scale, body.n))

    def measure(self, body: ConvexBody, scale: float, seed: SeedSpec, samples: int) -> EstimateCI:
        self._check(body)
        if scale <= 0.0:
            return EstimateCI.exact(0.0, seed=seed)
        return EstimateCI.exact(float(chi2.cdf(scale * scale, body.n)), seed=seed)


class MonteCarloMeasure(GaussianMeasureProvider):
    method = MeasureMethod.MONTE_CARLO

    def measure(self, body: ConvexBody, scale: float, seed: SeedSpec, samples: int) -> EstimateCI:
        if samples < 1:
            raise InvalidParameterError("samples must be at least 1")

        def _hits(chunk_seed: SeedSpec, count: int) -> int:
            g = sample_gaussian(body.n, chunk_seed, size=count)
            return int(np.count_nonzero(body.norm(g) <= scale))

        hits = sum(chunked_map(_hits, samples, seed, label="gauss-chunk"))
        p = hits / samples
        return EstimateCI(value=p, stderr=math.sqrt(p * (1.0 - p) / samples), samples=samples, seed=seed)


_PROVIDERS: dict[MeasureMethod, type[GaussianMeasureProvider]] = {
    MeasureMethod.ANALYTIC_CUBE: AnalyticCubeMeasure,
    MeasureMethod.ANALYTIC_EUCLIDEAN_BALL: AnalyticEuclideanBallMeasure,
    MeasureMethod.MONTE_CARLO: MonteCarloMeasure,
}


def get_measure_provider(method: MeasureMethod | str) -> GaussianMeasureProvider:
    try:
        key = MeasureMethod(method)
    except ValueError as exc:
        raise MeasureMethodError(f"unknown Gaussian measure method '{method}'") from exc
    return _PROVIDERS[key]()


def analytic_method_for(body: ConvexBody) -> MeasureMethod | None:
    if body.is_cube:
        return MeasureMethod.ANALYTIC_CUBE
    if body.is_euclidean:
        return MeasureMethod.ANALYTIC_EUCLIDEAN_BALL
    return None


# ── Operations ────────────────────────────────────────────────────────


def gaussian_measure(
    body: ConvexBody,
    scale: float,
    method: MeasureMethod | str | None,
    seed: SeedSpec,
    samples: int = DEFAULT_SAMPLES,
) -> EstimateCI:
    """γ(scale·K). ``method=None`` picks the analytic path when one exists."""
    if scale < 0.0 or math.isnan(scale):
        raise InvalidParameterError(f"scale must be non-negative, got {scale}")
    if method is None:
        method = analytic_method_for(body) or MeasureMethod.MONTE_CARLO
    provider = get_measure_provider(method)
    provider._check(body)
    if scale == 0.0:
        return EstimateCI.exact(0.0, seed=seed)
    return provider.measure(body, scale, seed, samples)


def log_gaussian_measure(body: ConvexBody, scale: float) -> float:
    """log γ(scale·K) on an analytic path; -inf at scale 0."""
    method = analytic_method_for(body)
    if method is None:
        raise MeasureMethodError(f"no analytic Gaussian measure for body {body.spec}")
    return get_measure_provider(method).log_measure(body, scale)


@dataclass(frozen=True)
class SurrogateBracket:
    """Log-space bracket for σ(S^{n-1} ∩ tK) from Gaussian masses of dilates."""

    t: float
    log_lower: float
    log_upper: float
    log_centre: float

    @property
    def log_midpoint(self) -> float:
        """Geometric mean of the two endpoints, in log space."""
        return 0.5 * (self.log_lower + self.log_upper)

    @property
    def log_half_width(self) -> float:
        return 0.5 * (self.log_upper - self.log_lower)

    def contains(self, p: float, slack: float = 0.0) -> bool:
        return math.exp(self.log_lower) - slack <= p <= math.exp(self.log_upper) + slack


def surrogate_bracket(body: ConvexBody, t: float) -> SurrogateBracket:
    """σ(S ∩ tK) ∈ [γ(½t√n K), min(1, 2γ(2t√n K))], centred at γ(t√n K).

    The lower end omits the additive e^{-cn} correction, whose constant is
    not known; it is the Gaussian mass of the half-dilate only.
    """
    if t <= 0.0:
        raise InvalidParameterError("t must be positive")
    root_n = math.sqrt(body.n)
    log_lower = log_gaussian_measure(body, 0.5 * t * root_n)
    log_upper = min(0.0, math.log(2.0) + log_gaussian_measure(body, 2.0 * t * root_n))
    log_centre = log_gaussian_measure(body, t * root_n)
    return SurrogateBracket(t=t, log_lower=log_lower, log_upper=log_upper, log_centre=log_centre)
