"""Monte Carlo trial execution, optionally across worker processes."""

import logging
from multiprocessing import Pool
from typing import Any, Callable, List, Sequence, Tuple

logger = logging.getLogger(__name__)

def run_trials(worker: Callable[..., Any], args_list: Sequence[Tuple], workers: int = 1) -> List[Any]:
    """Call `worker(*args)` for every argument tuple, results in input order.

    `worker` must be a module-level function so it can be pickled when
    `workers > 1`.
    """
    args_list = list(args_list)
    if workers <= 1 or len(args_list) <= 1:
        return [worker(*args) for args in args_list]

    logger.info(f"Running {len(args_list)} trials on {workers} workers")
    with Pool(processes=workers) as pool:
        # starmap keeps the input order, so results do not depend on scheduling
        return pool.starmap(worker, args_list)
