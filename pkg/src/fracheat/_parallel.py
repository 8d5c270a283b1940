from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_count(requested: int | None = None) -> int:
    """Worker count: ``requested`` if given, else ``FRACHEAT_THREADS``, else 1."""
    if requested is None:
        env = os.environ.get("FRACHEAT_THREADS", "").strip()
        requested = int(env) if env else 1
    return max(1, int(requested))


def pmap(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Order-preserving map; numpy releases the GIL in the heavy kernels."""
    items = list(items)
    n = min(thread_count(threads), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
