"""
Deterministic chunked map over sample indices.

A run of ``total`` samples is cut into fixed-size chunks; chunk ``i`` draws
from the substream ``seed.child("chunk", i)``. Chunks may run on a thread
pool, but results are always merged in chunk order, so the worker count
never changes a single output bit.
"""

from __future__ import annotations

import contextvars
import logging
from collections.abc import Callable, Iterator
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import TypeVar

from common.config import threads_from_env
from common.runcontext import seed_scope
from contracts.records import SeedSpec

from app.core.config import CHUNK_SIZE

logger = logging.getLogger(__name__)

T = TypeVar("T")

_threads_ctx: contextvars.ContextVar[int | None] = contextvars.ContextVar("threads", default=None)


def current_threads() -> int:
    threads = _threads_ctx.get()
    return threads if threads is not None else threads_from_env()


@contextmanager
def use_threads(threads: int | None) -> Iterator[None]:
    token = _threads_ctx.set(None if threads is None else max(1, int(threads)))
    try:
        yield
    finally:
        _threads_ctx.reset(token)


def chunk_counts(total: int, chunk_size: int = CHUNK_SIZE) -> list[int]:
    if total <= 0:
        return []
    full, rest = divmod(total, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def chunked_map(
    fn: Callable[[SeedSpec, int], T],
    total: int,
    seed: SeedSpec,
    *,
    chunk_size: int = CHUNK_SIZE,
    label: str = "chunk",
) -> list[T]:
    """Apply ``fn(chunk_seed, count)`` to every chunk; results in chunk order."""
    counts = chunk_counts(total, chunk_size)
    seeds = [seed.child(label, i) for i in range(len(counts))]
    threads = min(current_threads(), max(1, len(counts)))

    def _run(i: int) -> T:
        with seed_scope(seeds[i].path_str):
            out = fn(seeds[i], counts[i])
        logger.debug("chunk %d/%d done (%d samples)", i + 1, len(counts), counts[i])
        return out

    if threads <= 1 or len(counts) <= 1:
        return [_run(i) for i in range(len(counts))]

    contexts = [contextvars.copy_context() for _ in counts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map() yields in submission order regardless of completion order
        return list(pool.map(lambda i: contexts[i].run(_run, i), range(len(counts))))


def indexed_map(fn: Callable[[int], T], count: int) -> list[T]:
    """Map over independent work items (e.g. subspaces); merged in index order."""
    threads = min(current_threads(), max(1, count))
    if threads <= 1:
        return [fn(i) for i in range(count)]
    contexts = [contextvars.copy_context() for _ in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: contexts[i].run(fn, i), range(count)))
