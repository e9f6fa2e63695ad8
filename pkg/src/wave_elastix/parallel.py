"""Worker-count policy and a small thread-map helper.

Per-wavenumber eigen-solves and per-cell scoring are independent; LAPACK and
the scoring kernels release the GIL, so a thread pool is enough. The
WAVE_ELASTIX_THREADS environment variable caps the worker count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "WAVE_ELASTIX_THREADS"


def worker_count(requested=None):
    """Resolve the number of workers: explicit argument, else env cap, else CPU count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def thread_map(fn, items, workers=None):
    """Map fn over items, preserving order. Sequential when one worker.

    Results are collected into a preallocated list indexed by position, so the
    output is deterministic regardless of scheduling.
    """
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    out = [None] * len(items)

    def run(idx_item):
        idx, item = idx_item
        out[idx] = fn(item)

    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        list(pool.map(run, enumerate(items)))
    return out
