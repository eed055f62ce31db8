"""Deterministic chunked parallelism.

Work is split into fixed-size chunks whose boundaries never depend on the
worker count, so numerical results are identical whether a stage runs on one
thread or many. The ``BEAMFORGE_THREADS`` environment variable caps the
worker pool: unset or ``1`` means sequential, ``0`` means one worker per CPU,
any other positive integer is used as given.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    raw = os.environ.get("BEAMFORGE_THREADS", "1").strip()
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"BEAMFORGE_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("BEAMFORGE_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def chunk_bounds(n_items, chunk_size):
    return [(start, min(start + chunk_size, n_items))
            for start in range(0, n_items, chunk_size)]


def map_chunks(fn, n_items, chunk_size):
    """Yield ``((start, stop), fn(start, stop))`` over fixed-size chunks.

    Chunks are evaluated in parallel when the worker pool allows it, but
    always yielded in order.
    """
    bounds = chunk_bounds(n_items, chunk_size)
    workers = worker_count()
    if workers <= 1 or len(bounds) <= 1:
        for start, stop in bounds:
            yield (start, stop), fn(start, stop)
        return
    with ThreadPoolExecutor(max_workers=min(workers, len(bounds))) as pool:
        yield from zip(bounds, pool.map(lambda b: fn(*b), bounds))
