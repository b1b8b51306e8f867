"""Fan-out of realization blocks over worker processes.

Realizations are split into fixed-size blocks whose boundaries do not depend
on the worker count; results come back in block order. Together with the
counter-based streams this makes every study independent of ``workers``.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

__all__ = ["default_workers", "block_ranges", "map_blocks"]


def default_workers() -> int:
    env = os.environ.get("LANGEVIN_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"LANGEVIN_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"LANGEVIN_WORKERS must be >= 1, got {n}")
        return n
    return 1


def block_ranges(n: int, block: int) -> list[tuple[int, int]]:
    return [(s, min(s + block, n)) for s in range(0, n, block)]


def map_blocks(fn, tasks, workers: int | None = None) -> list:
    """``[fn(*t) for t in tasks]``, possibly across processes, order preserved."""
    tasks = list(tasks)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        futures = [ex.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]
