"""
Thread-pool map used for per-agent work inside a round
Results always come back in input order so every reduction downstream
runs in the same fixed order as a sequential run
"""
import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "FOCUS_FL_THREADS"

_thread_override = None


def set_thread_count(threads):
    """Override FOCUS_FL_THREADS for this process (None restores the env var)"""
    global _thread_override
    if threads is not None and int(threads) < 1:
        raise ValueError("thread count must be >= 1")
    _thread_override = None if threads is None else int(threads)


def thread_count():
    if _thread_override is not None:
        return _thread_override
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ordered_map(fn, items):
    """
    Apply fn to every item, possibly in parallel.

    Args:
        fn: Pure function of one item
        items: Sequence of work items

    Returns:
        List of results in the same order as items
    """
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
