"""Worker-thread helpers for the pure per-image paths.

DROPSR_THREADS caps parallelism (default: available cores).  Results
keep input order, so parallel and sequential runs are bit-identical.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    env = os.environ.get("DROPSR_THREADS")
    if env is None:
        return os.cpu_count() or 1
    try:
        n = int(env)
    except ValueError:
        raise ValueError(f"DROPSR_THREADS must be a positive integer, got {env!r}") from None
    if n < 1:
        raise ValueError(f"DROPSR_THREADS must be >= 1, got {n}")
    return n


def thread_map(fn, items) -> list:
    """Order-preserving map, threaded when more than one worker is
    available and there is more than one item."""
    items = list(items)
    workers = worker_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
