"""Ordered map over a process pool; ``workers <= 1`` runs inline."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_workers(workers) -> int:
    if workers is None or int(workers) <= 0:
        return os.cpu_count() or 1
    return int(workers)


def ordered_map(fn, tasks, workers=1, chunksize=1):
    """``[fn(t) for t in tasks]``, possibly computed in worker processes.

    Results come back in task order, so the output never depends on the
    number of workers or on scheduling.
    """
    tasks = list(tasks)
    workers = resolve_workers(workers)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks, chunksize=chunksize))
