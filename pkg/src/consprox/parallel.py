"""Deterministic worker-pool map for per-replica solves.

Results come back in submission order regardless of completion order, so
reductions over the outputs are reproducible for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def pmap(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chunked_apply(fn: Callable[[slice], np.ndarray], n: int,
                  workers: int = 1) -> np.ndarray:
    """Apply ``fn`` to contiguous index chunks and concatenate in order.

    ``fn`` must treat each index independently so the result does not
    depend on the chunking.
    """
    if workers <= 1 or n <= 1:
        return fn(slice(0, n))
    parts = min(workers, n)
    bounds = np.linspace(0, n, parts + 1).astype(int)
    slices = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])
              if b > a]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        out = list(pool.map(fn, slices))
    return np.concatenate(out, axis=0)
