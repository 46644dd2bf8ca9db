"""Replicate and direction fan-out over a process pool."""
import logging
import os
from concurrent.futures import ProcessPoolExecutor

from . import conf

logger = logging.getLogger(__name__)


def resolve_jobs(jobs=None):
    if jobs is None:
        return conf.jobs()
    jobs = int(jobs)
    return jobs if jobs > 0 else (os.cpu_count() or 1)


def map_tasks(func, items, jobs=None):
    """
    `[func(item) for item in items]`, possibly spread over worker processes.

    Results come back in input order whatever the worker count, so reports
    built from them are identical for every `jobs`. `func` must be a
    module-level function and the items picklable.
    """
    items = list(items)
    workers = min(resolve_jobs(jobs), len(items))
    if workers <= 1:
        return [func(item) for item in items]
    logger.debug('%s: %d tasks on %d workers', func.__name__, len(items), workers)
    chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunksize))
