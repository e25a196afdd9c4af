"""
Worker pool for the kernels.

Work is split into fixed chunks that do not depend on the worker count; each
chunk is computed by exactly one worker with a sequential reduction order and
results are combined in chunk order. Kernel output is therefore bitwise
identical for any worker count.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_num_workers = 1
_executor = None


def set_num_workers(count: int) -> None:
    """Set the number of kernel worker threads (>= 1)"""
    global _num_workers, _executor
    count = max(1, int(count))
    if count == _num_workers:
        return
    if _executor is not None:
        _executor.shutdown(wait=True)
        _executor = None
    _num_workers = count
    logger.debug(f"Kernel worker count set to {count}")


def get_num_workers() -> int:
    return _num_workers


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Apply fn to every item, preserving order"""
    global _executor
    items = list(items)
    if _num_workers == 1 or len(items) < 2:
        return [fn(item) for item in items]
    if _executor is None:
        _executor = ThreadPoolExecutor(max_workers=_num_workers, thread_name_prefix="flavr-kernel")
    return list(_executor.map(fn, items))
