"""
Run context carried through context variables.

The CLI and the experiment runner set the active run name and seed path;
the logging filter copies them onto every record so a log line can always
be traced back to the substream that produced it.
"""

from __future__ import annotations

import contextvars
from collections.abc import Iterator
from contextlib import contextmanager

_run_ctx: contextvars.ContextVar[str] = contextvars.ContextVar("run", default="")
_seed_path_ctx: contextvars.ContextVar[str] = contextvars.ContextVar("seed_path", default="")


def get_run() -> str:
    return _run_ctx.get("")


def get_seed_path() -> str:
    return _seed_path_ctx.get("")


@contextmanager
def run_context(run: str, seed_path: str = "") -> Iterator[None]:
    run_token = _run_ctx.set(run)
    seed_token = _seed_path_ctx.set(seed_path)
    try:
        yield
    finally:
        _seed_path_ctx.reset(seed_token)
        _run_ctx.reset(run_token)


@contextmanager
def seed_scope(seed_path: str) -> Iterator[None]:
    token = _seed_path_ctx.set(seed_path)
    try:
        yield
    finally:
        _seed_path_ctx.reset(token)
