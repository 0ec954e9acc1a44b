"""Common utilities shared across the lab packages."""

from common.errors import LabError, exit_code_for
from common.logging import setup_logging
from common.runcontext import run_context, seed_scope

__all__ = ["LabError", "exit_code_for", "run_context", "seed_scope", "setup_logging"]
