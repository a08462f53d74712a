"""Seed derivation and an order-preserving trial pool."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

__all__ = ["trial_seeds", "run_tasks", "mean_and_se", "loglog_slope"]

T = TypeVar("T")


def trial_seeds(seed: int, point: int, trial: int, count: int = 2) -> list[int]:
    """Independent 64-bit seeds for one ``(point, trial)`` cell.

    Derived from ``SeedSequence(seed, spawn_key=(point, trial))`` so the
    value does not depend on how trials are scheduled.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(point, trial))
    return [int(x) for x in ss.generate_state(count, dtype=np.uint64)]


def run_tasks(fn: Callable[..., T], tasks: Sequence[tuple], threads: int = 1) -> list[T]:
    """Evaluate ``fn(*task)`` for every task, returning results in task order."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: fn(*t), tasks))


def mean_and_se(values) -> tuple[float, float]:
    """Sample mean and its standard error (0 for a single value)."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
