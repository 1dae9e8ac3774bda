# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import logging
import multiprocessing
import multiprocessing.pool
import os
from typing import Callable, Iterable, List, Optional

from tqdm import tqdm


logger = logging.getLogger("computer")


def default_workers() -> int:
    return os.cpu_count() or 1


class WorkerPool:
    """Order-preserving map over a process pool.

    With `workers <= 1` everything runs in the calling process; results are the same
    either way because every work unit is a pure function of its arguments.
    """

    def __init__(self, workers: Optional[int] = None, progress: bool = False):
        self.workers = default_workers() if workers is None else max(1, int(workers))
        self.progress = progress
        self._pool = None

    def __enter__(self):
        if self.workers > 1:
            self._pool = multiprocessing.pool.Pool(self.workers)
            logger.info(f"Started worker pool with {self.workers} processes")
        return self

    def __exit__(self, exc_type, exc, tb):
        if self._pool is not None:
            if exc_type is None:
                self._pool.close()
            else:
                self._pool.terminate()
            self._pool.join()
            self._pool = None

    def map(self, fn: Callable, items: Iterable, desc: str = "") -> List:
        items = list(items)
        bar = tqdm(
            total=len(items),
            desc=desc,
            disable=not (self.progress and desc),
            dynamic_ncols=True,
        )
        try:
            if self._pool is None:
                results = []
                for item in items:
                    results.append(fn(item))
                    bar.update()
                return results
            chunksize = max(1, len(items) // (4 * self.workers))
            results = []
            for result in self._pool.imap(fn, items, chunksize=chunksize):
                results.append(result)
                bar.update()
            return results
        finally:
            bar.close()
