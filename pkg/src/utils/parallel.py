"""
Thread fan-out helpers.
Work is always split into deterministic chunks and gathered in submission
order, so results do not depend on the number of threads.
"""

import os
import logging
from concurrent.futures import ThreadPoolExecutor

from .errors import DomainError

logger = logging.getLogger(__name__)


def resolve_threads(threads):
    """Turn a --threads value into a worker count (0 = all cores)."""
    if threads is None or threads == 0:
        return os.cpu_count() or 1
    if threads < 0:
        raise DomainError(f"threads must be >= 0, got {threads}")
    return int(threads)


def chunk(items, parts):
    """Split a sequence into at most `parts` contiguous, ordered chunks."""
    items = list(items)
    parts = max(1, min(parts, len(items)))
    size, extra = divmod(len(items), parts)
    chunks = []
    start = 0
    for i in range(parts):
        stop = start + size + (1 if i < extra else 0)
        chunks.append(items[start:stop])
        start = stop
    return chunks


def parallel_map(fn, items, threads=1):
    """Apply fn to every item, preserving order.

    Args:
        fn: Callable taking one item
        items: Iterable of work items
        threads: Worker count (0 = auto, 1 = run inline)

    Returns:
        List of results in input order
    """
    items = list(items)
    workers = resolve_threads(threads)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    workers = min(workers, len(items))
    logger.debug(f"Running {len(items)} tasks on {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
