"""
Shared error types and the exit-code mapping.

Every entry-point funnels exceptions through :func:`exit_code_for` so all
failures end the process with a consistent code and a one-line message:

    error[<type>]: <detail>
"""

from __future__ import annotations

import logging

# ── Exit codes ─────────────────────────────────────────────────────────

EXIT_OK = 0
EXIT_VERDICT_FAILED = 1
EXIT_USAGE = 2
EXIT_LAB_ERROR = 3
EXIT_OUTPUT = 4
EXIT_UNEXPECTED = 70

# ── Base errors ────────────────────────────────────────────────────────


class LabError(Exception):
    """Generic lab error."""

    kind = "lab_error"

    def __init__(self, detail: str = "Lab error"):
        super().__init__(detail)
        self.detail = detail


class DimensionMismatchError(LabError):
    """Vector or subspace dimension does not match the body."""

    kind = "dimension_mismatch"

    def __init__(self, detail: str = "Dimension mismatch"):
        super().__init__(detail)


class InvalidBodyError(LabError):
    """Malformed body spec or a norm oracle that is not a genuine norm."""

    kind = "invalid_body"

    def __init__(self, detail: str = "Invalid body"):
        super().__init__(detail)


class MeasureMethodError(LabError):
    """Analytic Gaussian-measure path requested for an incompatible body."""

    kind = "measure_method"

    def __init__(self, detail: str = "Measure method not available for this body"):
        super().__init__(detail)


class HeuristicDisabledError(LabError):
    """Quantity needs b(K) but b is unknown and the heuristic is disabled."""

    kind = "heuristic_disabled"

    def __init__(self, detail: str = "Lipschitz constant unknown and heuristic disabled"):
        super().__init__(detail)


class NumericalOverflowError(LabError):
    """A moment overflowed; ``seed_path`` names the substream that produced it."""

    kind = "numerical_overflow"

    def __init__(self, detail: str = "Numerical overflow", seed_path: str = ""):
        super().__init__(f"{detail} (seed {seed_path})" if seed_path else detail)
        self.seed_path = seed_path


class InvalidParameterError(LabError, ValueError):
    """A grid or scalar parameter outside the range an estimator accepts."""

    kind = "invalid_parameter"

    def __init__(self, detail: str = "Invalid parameter"):
        super().__init__(detail)


class UsageError(LabError):
    """Bad command line; ``flag`` names the offending option."""

    kind = "usage_error"

    def __init__(self, detail: str = "Usage error", flag: str = ""):
        super().__init__(f"{flag}: {detail}" if flag else detail)
        self.flag = flag


class OutputError(LabError):
    """Report or CSV could not be written."""

    kind = "output_error"

    def __init__(self, detail: str = "Cannot write output"):
        super().__init__(detail)


# ── Mapping ────────────────────────────────────────────────────────────


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, OutputError):
        return EXIT_OUTPUT
    if isinstance(exc, LabError):
        return EXIT_LAB_ERROR
    logging.getLogger("common.errors").exception("Unhandled exception")
    return EXIT_UNEXPECTED


def describe(exc: BaseException) -> str:
    kind = exc.kind if isinstance(exc, LabError) else "internal_error"
    detail = exc.detail if isinstance(exc, LabError) else "An unexpected error occurred"
    return f"error[{kind}]: {detail}"
