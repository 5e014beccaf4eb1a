"""Deterministic block-seeded parallel maps.

Every Monte Carlo routine splits its ensemble into fixed-size blocks.  Block
``k`` draws from ``SeedSequence(seed, spawn_key=(stream, k))`` so the numbers
an ion sees depend only on (seed, ion index), never on the worker count.
Reductions always run over blocks in index order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK_SIZE = 65536

T = TypeVar("T")


def block_slices(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    return [(lo, min(lo + block_size, n)) for lo in range(0, n, block_size)]


def block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream, block)))


def parallel_map(fn: Callable[[int], T], n_tasks: int, workers: int = 1) -> list[T]:
    """Apply ``fn`` to ``range(n_tasks)``; results come back in task order."""
    if workers <= 1 or n_tasks <= 1:
        return [fn(k) for k in range(n_tasks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_tasks)))


def ordered_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Sum block partials in block order (fixed association, hence reproducible)."""
    total = np.zeros_like(parts[0])
    for p in parts:
        total = total + p
    return total
