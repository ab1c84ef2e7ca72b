"""Pure shuffle model baseline: local generalized random response, shuffle only."""

import math
from typing import Optional

import numpy as np

from Core.crypto import CipherSuite
from Core.datasets import CategoricalDataset
from Core.protocols.base import FakeUsers, ProtocolOutput, ShufflerRandomness, combine_inputs
from Core.protocols.lnf import augmented_shuffle
from Core.utils.constants import ProtocolKind, STREAM_USER
from Core.utils.rng import Rng

def grr_keep_probability(eps0: float, d: int) -> float:
    """Probability that a user reports its true item."""
    return math.exp(eps0) / (math.exp(eps0) + d - 1) if math.isfinite(eps0) else 1.0

def grr_randomize(values: np.ndarray, eps0: float, d: int, generator: np.random.Generator) -> np.ndarray:
    """Keep each item w.p. e^ε0/(e^ε0+d-1), otherwise report a uniform other item."""
    values = np.asarray(values, dtype=np.int64)
    if d == 1:
        return values.copy()
    keep = generator.random(values.size) < grr_keep_probability(eps0, d)
    # Uniform over the d-1 other items
    other = generator.integers(1, d, size=values.size)
    other = other + (other >= values)
    return np.where(keep, values, other)

def pure_grr_run(dataset: CategoricalDataset, eps0: float, suite: CipherSuite, rng: Rng,
                 fake: Optional[FakeUsers] = None, randomness: Optional[ShufflerRandomness] = None,
                 keep_hop_log: bool = True) -> ProtocolOutput:
    """Shuffled GRR reports debiased to f̂_i = (c_i/N - q) / (p - q).

    Fake users submit their payloads without randomizing.
    """
    if eps0 <= 0:
        raise ValueError(f"Local epsilon must be positive, got {eps0}")
    d = dataset.d
    reports = combine_inputs(grr_randomize(dataset.values, eps0, d, rng.stream(STREAM_USER)), fake)
    counts, transcript = augmented_shuffle(reports, d, None, 1.0, suite, rng, randomness, keep_hop_log)

    n_total = reports.size
    p = grr_keep_probability(eps0, d)
    if d == 1:
        estimates = counts / n_total
    else:
        q = (1.0 - p) / (d - 1)
        estimates = (counts / n_total - q) / (p - q)
    return ProtocolOutput(ProtocolKind.PURE_GRR, d, estimates, transcript=transcript, n_total=n_total,
                          counts=counts)
