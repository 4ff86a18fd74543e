"""Deterministic task decomposition for Monte Carlo loops.

Work is cut into tasks whose sizes depend only on the total count and the
chunk size, never on the worker count. Task ``t`` draws from
``rng.stream(seed, t)`` and results come back in task order, so any
reduction over them is reproducible bit for bit.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence


def split(total: int, chunk: int) -> list[tuple[int, int]]:
    """(start, size) pairs covering ``range(total)`` in chunks."""
    if total < 0 or chunk < 1:
        raise ValueError("bad split arguments")
    return [(s, min(chunk, total - s)) for s in range(0, total, chunk)]


def run_tasks(fn: Callable, task_args: Sequence[tuple], workers: int = 1) -> list:
    """Evaluate ``fn(task_index, *args)`` for every task, results in task order.

    ``fn`` must be a module-level function when ``workers > 1``.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1 or len(task_args) <= 1:
        return [fn(i, *a) for i, a in enumerate(task_args)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(fn, i, *a) for i, a in enumerate(task_args)]
        return [f.result() for f in futures]
