"""Worker-count policy shared by the batch APIs."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ENV_VAR = "RESONALAB_THREADS"


def worker_count(requested: int | None = None) -> int:
    """Number of worker threads, capped by ``RESONALAB_THREADS`` when set."""
    cap = os.environ.get(ENV_VAR)
    n = requested if requested is not None else 1
    if cap:
        try:
            n = min(n, max(1, int(cap))) if requested is not None else max(1, int(cap))
        except ValueError:
            pass
    return max(1, n)


def pmap(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """Order-preserving map, threaded when more than one worker is allowed."""
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
