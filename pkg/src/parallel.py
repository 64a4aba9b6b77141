"""
Block-parallel map

Per-block work (operators, snapshot spaces, eigensolves, indicators) is
independent. The worker count comes from GMSDG_THREADS; results always come
back in input order so merged outputs stay deterministic.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def worker_count(default: int = 1) -> int:
    """Number of workers requested through GMSDG_THREADS"""
    raw = os.getenv('GMSDG_THREADS')
    if not raw:
        return default
    try:
        count = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer GMSDG_THREADS={raw!r}")
        return default
    return max(1, count)


def block_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """
    Apply fn to every item, fanning out over a thread pool

    Args:
        fn: Function of one item
        items: Items to process
        workers: Worker count, defaults to GMSDG_THREADS

    Returns:
        Results in the order of items
    """
    items = list(items)
    workers = worker_count() if workers is None else max(1, workers)

    if workers == 1 or len(items) < 2:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
