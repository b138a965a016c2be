from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

import psutil
from loguru import logger

T = TypeVar("T")
R = TypeVar("R")


def worker_count(jobs: int | None = None) -> int:
    """Requested job count, or the number of physical cores."""
    if jobs is not None and jobs > 0:
        return jobs
    return psutil.cpu_count(logical=False) or 1


def map_in_order(fn: Callable[[T], R], items: Iterable[T], jobs: int | None = None) -> list[R]:
    """
    Apply ``fn`` to every item, in worker processes when more than one job is
    allowed. Results come back in input order whatever the completion order.
    Args:
        fn (Callable): a picklable module-level function.
        items (Iterable): picklable arguments, one call each.
        jobs (int, optional): worker processes; None means one per physical core.
    Returns:
        list: fn(item) for every item, in order.
    """
    items = list(items)
    workers = min(worker_count(jobs), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    logger.debug(f"Running {len(items)} tasks on {workers} worker processes")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
