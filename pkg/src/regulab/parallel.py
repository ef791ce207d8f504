"""Ordered map over grid points, capped by ``REGULAB_THREADS``."""

import os
from concurrent.futures import ThreadPoolExecutor


def thread_cap(threads=None) -> int:
    if threads is not None:
        return max(1, int(threads))
    raw = os.environ.get("REGULAB_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ordered_map(fn, items, threads=None):
    """``[fn(i, item) for i, item in enumerate(items)]``, possibly threaded.

    Results come back in input order regardless of completion order.
    """
    items = list(items)
    workers = min(thread_cap(threads), len(items)) if items else 1
    if workers <= 1:
        return [fn(i, item) for i, item in enumerate(items)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, i, item) for i, item in enumerate(items)]
        return [f.result() for f in futures]
