"""Thread-count handling shared by the evaluation code and the CLI."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "RF_SENTINEL_THREADS"


def thread_count() -> int:
    """Worker cap from ``RF_SENTINEL_THREADS`` (default 1; invalid values fall back to 1)."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """``map`` that keeps input order and uses up to ``threads`` workers."""
    n = thread_count() if threads is None else max(1, threads)
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
