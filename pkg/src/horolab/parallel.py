"""Deterministic chunked execution.

Work is cut into fixed-size chunks independent of the worker count; workers
only change which thread evaluates a chunk, never the chunk boundaries or
the combination order, so numeric outputs are identical for any pool size.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

CHUNK = 4096


def chunk_ranges(n: int, chunk: int = CHUNK) -> list[tuple[int, int]]:
    return [(s, min(s + chunk, n)) for s in range(0, n, chunk)]


def map_chunks(fn: Callable[[int, int], np.ndarray], n: int, workers: int = 1,
               chunk: int = CHUNK) -> np.ndarray:
    """Concatenate fn(start, stop) over fixed chunks, in index order."""
    ranges = chunk_ranges(n, chunk)
    if workers <= 1 or len(ranges) <= 1:
        parts = [fn(s, e) for s, e in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda r: fn(*r), ranges))
    return np.concatenate(parts)


def tree_sum(values: Sequence[float]) -> float:
    """Pairwise reduction in fixed order (arity 2), independent of chunking."""
    vals = [float(v) for v in values]
    if not vals:
        return 0.0
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] if i + 1 < len(vals) else vals[i]
               for i in range(0, len(vals), 2)]
        vals = nxt
    return vals[0]
