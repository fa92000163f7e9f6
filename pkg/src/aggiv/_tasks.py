"""Order-independent task execution for replicate loops."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], tasks: Iterable[T], jobs: int = 1) -> list[R]:
    """Apply ``fn`` to every task, in a process pool when ``jobs > 1``.

    Results come back in task order, so callers see the same output
    whatever the degree of parallelism.  ``fn`` must be picklable.
    """
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
