"""Threshold filtering of hash counts."""

from typing import Callable, Optional

import numpy as np

from Core.dummy import DummyCountDistribution
from Core.protocols.base import FilterResult

def filter_items(counts: np.ndarray, alpha: float, d1: DummyCountDistribution, l: int,
                 hash_fn=None, restrict: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> FilterResult:
    """Select hash values whose count reaches the tail-α quantile of D1, keeping at most l.

    Counts are indexed by hash value 1..b. When more than l pass, the l
    largest counts are kept and ties go to the smaller hash value. Λ is the
    union of preimages under `hash_fn`, optionally narrowed by `restrict`.
    """
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise ValueError("Hash counts must be nonnegative")
    threshold = d1.threshold(alpha)
    passing = np.flatnonzero(counts >= threshold) + 1
    if passing.size > l:
        order = np.lexsort((passing, -counts[passing - 1]))
        passing = np.sort(passing[order[:l]])

    items = np.zeros(0, dtype=np.int64)
    if hash_fn is not None and passing.size:
        items = hash_fn.preimages_many(passing)
        if restrict is not None:
            items = restrict(items)
    return FilterResult(selected_hashes=passing.astype(np.int64), items=np.asarray(items, dtype=np.int64),
                        threshold=threshold, counts=counts)
