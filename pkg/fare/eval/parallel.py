import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import torch

from fare.common import num_workers

T = TypeVar('T')
R = TypeVar('R')


def _init_worker():
    torch.set_num_threads(1)


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    '''Map `fn` over independent work items, preserving their order.

    Runs in-process when a single worker is allowed (``FARE_THREADS=1``);
    `fn` and the items must be picklable otherwise.
    '''
    items = list(items)
    workers = min(num_workers(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    logging.info(f'Running {len(items)} jobs on {workers} worker processes')
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker) as pool:
        return list(pool.map(fn, items))
