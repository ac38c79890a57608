"""Thread-count setting shared by the parallel kernels.

Kernels split work into contiguous chunks whose results are computed in a
fixed order, so output bits do not depend on the thread count.
"""

from __future__ import annotations

import contextlib
import os
from concurrent.futures import ThreadPoolExecutor

_threads = max(1, int(os.environ.get("WAVEBLUR_THREADS", "1")))


def get_threads() -> int:
    return _threads


def set_threads(n: int) -> None:
    global _threads
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _threads = int(n)


@contextlib.contextmanager
def threads(n: int):
    prev = get_threads()
    set_threads(n)
    try:
        yield
    finally:
        set_threads(prev)


def chunk_bounds(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n)) if n else 1
    edges = [n * i // parts for i in range(parts + 1)]
    return list(zip(edges[:-1], edges[1:]))


def pmap(fn, items, n_threads: int | None = None):
    """Ordered map, threaded when more than one thread is configured."""
    n_threads = n_threads or get_threads()
    items = list(items)
    if n_threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(fn, items))
