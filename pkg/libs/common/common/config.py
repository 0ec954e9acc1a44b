"""
12-Factor configuration helper.

Every entry-point reads its config from environment variables.
This module provides typed helpers the lab packages use.
"""

from __future__ import annotations

import os


def env(key: str, default: str = "") -> str:
    return os.environ.get(key, default)


def env_int(key: str, default: int = 0) -> int:
    return int(os.environ.get(key, str(default)))


def env_float(key: str, default: float = 0.0) -> float:
    return float(os.environ.get(key, repr(default)))


def env_bool(key: str, default: bool = False) -> bool:
    return os.environ.get(key, str(default)).lower() in ("1", "true", "yes")


def threads_from_env(default: int = 1) -> int:
    """``DVLAB_THREADS`` is read at call time so tests can monkeypatch it."""
    return max(1, env_int("DVLAB_THREADS", default))


# ── Shared defaults ───────────────────────────────────────────────────

LOG_LEVEL = env("LOG_LEVEL", "INFO")
LOG_FORMAT = env("LOG_FORMAT", "json")
ARTIFACTS_DIR = env("DVLAB_ARTIFACTS_DIR", os.path.join("artifacts", "lab"))
