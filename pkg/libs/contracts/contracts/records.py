"""
Versioned records shared by the estimators, the experiments and the CLI.

Every report written to disk MUST use :class:`ExperimentReport` as its
envelope so the QA harness and downstream tooling can deserialise uniformly.
Reports exclude wall time from their JSON form: identical inputs give
byte-identical files.
"""

from __future__ import annotations

import enum
import math
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = 1

# ── Seeds ──────────────────────────────────────────────────────────────


class SeedSpec(BaseModel):
    """Root seed plus the derivation path of one substream."""

    model_config = ConfigDict(frozen=True)

    root: int = Field(..., ge=0, lt=2**64)
    path: tuple[tuple[str, int], ...] = ()

    def child(self, label: str, index: int = 0) -> "SeedSpec":
        return SeedSpec(root=self.root, path=(*self.path, (label, int(index))))

    @property
    def path_str(self) -> str:
        steps = "/".join(f"{label}:{index}" for label, index in self.path)
        return f"{self.root}/{steps}" if steps else str(self.root)


# ── Estimates ──────────────────────────────────────────────────────────


class Method(str, enum.Enum):
    MONTE_CARLO = "MonteCarlo"
    ANALYTIC = "Analytic"
    HYBRID_SURROGATE = "HybridSurrogate"
    MULTISTART = "Multistart"


class Flag(str, enum.Enum):
    HEURISTIC_LOWER_BOUND = "heuristic_lower_bound"
    HEURISTIC_UPPER_BOUND = "heuristic_upper_bound"
    RULE_OF_THREE = "rule_of_three_upper_bound"
    HEAVY_TAIL = "heavy_tail"
    OPTIMIZER_NOT_CONVERGED = "optimizer_not_converged"
    RESTART_GAP = "restart_gap"
    CAPPED = "capped_at_n"


class EstimateCI(BaseModel):
    """A Monte Carlo (or exact) scalar with its standard error and provenance."""

    model_config = ConfigDict(frozen=True)

    value: float
    stderr: float = Field(0.0, ge=0.0)
    samples: int = Field(0, ge=0)
    method: Method = Method.MONTE_CARLO
    seed: SeedSpec | None = None
    flags: tuple[Flag, ...] = ()

    @model_validator(mode="after")
    def _check_method(self) -> "EstimateCI":
        if self.method is Method.ANALYTIC and self.stderr != 0.0:
            raise ValueError("analytic estimates carry zero stderr")
        if self.method is Method.MONTE_CARLO and self.samples <= 0:
            raise ValueError("Monte Carlo estimates need samples > 0")
        if self.method is Method.MULTISTART and self.samples <= 0:
            raise ValueError("multistart estimates need at least one restart")
        return self

    @classmethod
    def exact(cls, value: float, seed: SeedSpec | None = None) -> "EstimateCI":
        return cls(value=float(value), stderr=0.0, samples=0, method=Method.ANALYTIC, seed=seed)

    @property
    def is_exact(self) -> bool:
        return self.method is Method.ANALYTIC

    def has(self, flag: Flag) -> bool:
        return flag in self.flags

    def with_flags(self, *flags: Flag) -> "EstimateCI":
        merged = tuple(dict.fromkeys((*self.flags, *flags)))
        return self.model_copy(update={"flags": merged})

    def upper(self, sigmas: float) -> float:
        return self.value + sigmas * self.stderr

    def lower(self, sigmas: float) -> float:
        return self.value - sigmas * self.stderr


class LipschitzBound(BaseModel):
    """b(K); ``exact`` is False for the multistart heuristic (a lower bound)."""

    model_config = ConfigDict(frozen=True)

    value: float = Field(..., gt=0.0)
    exact: bool = True


# ── Body functionals ───────────────────────────────────────────────────


class BodyStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1)
    M: EstimateCI
    Med: EstimateCI
    b: LipschitzBound | None
    k: float | None = None
    k_heuristic: bool = False

    @model_validator(mode="after")
    def _check_k(self) -> "BodyStats":
        if self.b is not None and self.k is not None:
            expected = self.n * (self.M.value / self.b.value) ** 2
            if not math.isclose(self.k, expected, rel_tol=1e-12):
                raise ValueError("k must equal n (M/b)^2")
        return self


class DvoretzkyDimension(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    heuristic: bool = False


class SmallBallCurve(BaseModel):
    model_config = ConfigDict(frozen=True)

    eps_grid: tuple[float, ...]
    probs: tuple[EstimateCI, ...]
    hits: tuple[int, ...]
    fitted_exponent: float | None = None

    @field_validator("eps_grid")
    @classmethod
    def _eps_in_unit(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        if any(not 0.0 < e < 1.0 for e in v):
            raise ValueError("eps values must lie in (0, 1)")
        return v


class Route(str, enum.Enum):
    ANALYTIC = "Analytic"
    DIRECT_MC = "DirectMC"
    GAUSSIAN_SURROGATE = "GaussianSurrogate"
    LOWER_BOUND_RULE_OF_THREE = "LowerBoundRuleOfThree"


class CriticalDimension(BaseModel):
    model_config = ConfigDict(frozen=True)

    u: float = Field(2.0, gt=1.0)
    d: EstimateCI
    estimator_route: Route
    n: int
    event_probability: float | None = None
    surrogate_centre: float | None = None

    @model_validator(mode="after")
    def _check_cap(self) -> "CriticalDimension":
        if not 0.0 < self.d.value <= self.n:
            raise ValueError("d must lie in (0, n]")
        return self


class ConcentrationProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_grid: tuple[float, ...]
    probs: tuple[EstimateCI, ...]
    hits: tuple[int, ...]
    k: float | None = None
    fitted_decay: float | None = None


# ── Reports ────────────────────────────────────────────────────────────


class DataTable(BaseModel):
    """A plot-ready grid: one row per grid point, fixed column order."""

    columns: tuple[str, ...]
    rows: list[tuple[Any, ...]] = []

    def add(self, *values: Any) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, table has {len(self.columns)} columns")
        self.rows.append(tuple(values))


class ExperimentReport(BaseModel):
    """Stable envelope for every lab run written to disk."""

    schema_version: int = SCHEMA_VERSION
    name: str
    body: str | None = None
    parameters: dict[str, Any] = {}
    seed: SeedSpec
    estimates: dict[str, EstimateCI] = {}
    verdicts: dict[str, bool] = {}
    stability: dict[str, bool] = {}
    fitted_constants: dict[str, float | None] = {}
    notes: list[str] = []
    tables: dict[str, DataTable] = {}
    ci_sigmas: float = 4.0
    wall_time_s: float = Field(0.0, exclude=True)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    @property
    def failed_verdicts(self) -> list[str]:
        return [name for name, ok in self.verdicts.items() if not ok]

    def to_json_bytes(self) -> bytes:
        return (self.model_dump_json(indent=2) + "\n").encode("utf-8")

    @classmethod
    def from_json_bytes(cls, raw: bytes) -> "ExperimentReport":
        return cls.model_validate_json(raw)
