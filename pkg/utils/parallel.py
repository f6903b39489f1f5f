"""Ordered fan-out of independent jobs over a thread pool."""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

import config

J = TypeVar('J')
R = TypeVar('R')


def ordered_map(fn: Callable[[J], R], jobs: Sequence[J], threads: Optional[int] = None) -> List[R]:
    """
    fn over jobs with at most `threads` workers; results come back in job order.

    The first failing job's exception is raised once every job has finished.
    """
    threads = config.THREADS if threads is None else threads
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, job) for job in jobs]
        return [future.result() for future in futures]
