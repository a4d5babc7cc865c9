"""Worker-pool helper.

Work items are fully seeded up front and results are merged in input order,
so the output is byte-identical for every pool size (including 1). Threads
are used rather than processes: the hot loops (numba kernels, BLAS) release
the GIL, and thread pools keep closures usable as work functions.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_jobs(requested: int | None = None) -> int:
    """Pool size: CEFR_THREADS env var wins, then the request, then CPU count."""
    env = os.environ.get("CEFR_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"CEFR_THREADS must be an integer, got {env!r}") from None
    if requested is not None:
        return max(1, int(requested))
    return os.cpu_count() or 1


def parallel_map(fn, items, n_jobs: int = 1) -> list:
    """Map preserving input order; sequential when n_jobs <= 1."""
    items = list(items)
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(n_jobs, len(items))) as pool:
        return list(pool.map(fn, items))
