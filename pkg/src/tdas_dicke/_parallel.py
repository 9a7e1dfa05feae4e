"""Thread-pool helper with deterministic ordering.

TDAS_THREADS caps the worker count; unset or 1 means serial execution.  Heavy
work inside the mapped functions is numpy/scipy, which releases the GIL.
"""

import os
from concurrent.futures import ThreadPoolExecutor


def max_threads() -> int:
    env = os.environ.get("TDAS_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def thread_map(fn, items):
    """Map preserving input order; serial when only one worker is allowed."""
    items = list(items)
    n = max_threads()
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as ex:
        return list(ex.map(fn, items))
