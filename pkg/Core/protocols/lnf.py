"""Single-stage augmented shuffle: LNF and the hashed CH/GH/UH variants."""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from Core.crypto import CipherSuite
from Core.datasets import CategoricalDataset
from Core.dummy import DummyCountDistribution
from Core.hashing import sample_hash
from Core.protocols.base import (FakeUsers, ProtocolOutput, ShufflerRandomness,
                                 combine_inputs)
from Core.transport import COLLECTOR, SHUFFLER, Network, Transcript
from Core.utils.constants import (DEFAULT_SECURITY_BITS, ProtocolKind, STREAM_COLLECTOR,
                                  STREAM_SHUFFLER)
from Core.utils.rng import Rng

logger = logging.getLogger(__name__)

def augmented_shuffle(symbols: np.ndarray, slots: int, distribution: Optional[DummyCountDistribution],
                      beta: float, suite: CipherSuite, rng: Rng,
                      randomness: Optional[ShufflerRandomness] = None,
                      keep_hop_log: bool = True) -> Tuple[np.ndarray, Transcript]:
    """Users send E[x]; the shuffler samples, adds dummies per slot and shuffles; the collector counts.

    Symbols lie in 1..slots. Returns the counts c̃ over 1..slots and the
    transcript. `distribution=None` adds no dummies.
    """
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size and (symbols.min() < 1 or symbols.max() > slots):
        raise ValueError(f"User symbols outside [1, {slots}]")
    if not suite.fits(slots):
        raise ValueError(f"{slots} symbols do not fit a {suite.plaintext_bits}-bit payload")
    randomness = randomness or ShufflerRandomness(rng.stream(STREAM_SHUFFLER))

    network = Network(symbols.size, keep_hop_log)
    collector = suite.keygen(DEFAULT_SECURITY_BITS, rng.stream(STREAM_COLLECTOR))

    with network.stage("users"):
        network.send_from_users(SHUFFLER, suite.encrypt_batch(symbols, [collector.public]))

    with network.stage("shuffler"):
        incoming = network.receive(SHUFFLER)
        keep = randomness.keep_mask(len(incoming), beta)
        pool = incoming.take(np.flatnonzero(keep))
        if distribution is not None:
            z = randomness.dummy_counts(distribution, slots, "first")
            dummies = np.repeat(np.arange(1, slots + 1), z)
            pool = pool.concat(suite.encrypt_batch(dummies, [collector.public]))
            logger.debug(f"Shuffler kept {int(keep.sum())} of {keep.size} messages and added {dummies.size} dummies")
        network.send(SHUFFLER, COLLECTOR, pool.take(randomness.permutation(len(pool), "first")))

    with network.stage("collector"):
        received = suite.decrypt_batch(network.receive(COLLECTOR), collector.secret)
        counts = np.bincount(received, minlength=slots + 1)[1:]

    return counts, network.close()

def _check_beta(beta: float):
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")

def lnf_run(dataset: CategoricalDataset, distribution: DummyCountDistribution, beta: float,
            suite: CipherSuite, rng: Rng, fake: Optional[FakeUsers] = None,
            randomness: Optional[ShufflerRandomness] = None, keep_hop_log: bool = True) -> ProtocolOutput:
    """LNF: dummies for every item, f̂_i = (c̃_i - μ) / (Nβ) over all of [d]."""
    _check_beta(beta)
    symbols = combine_inputs(dataset.values, fake)
    counts, transcript = augmented_shuffle(symbols, dataset.d, distribution, beta, suite, rng,
                                           randomness, keep_hop_log)
    n_total = symbols.size
    estimates = (counts - distribution.mean) / (n_total * beta)
    return ProtocolOutput(ProtocolKind.LNF, dataset.d, estimates, transcript=transcript,
                          n_total=n_total, counts=counts)

def _grouped_run(kind: ProtocolKind, dataset: CategoricalDataset, distribution: DummyCountDistribution,
                 beta: float, hashes: Sequence, suite: CipherSuite, rng: Rng, fake: Optional[FakeUsers],
                 randomness: Optional[ShufflerRandomness], keep_hop_log: bool) -> ProtocolOutput:
    _check_beta(beta)
    b = hashes[0].b
    if b < 2:
        raise ValueError("Hash range b must be at least 2 (the estimator divides by b - 1)")
    if any(h.b != b for h in hashes):
        raise ValueError("All group hashes must share the range b")
    if any(h.d < dataset.d for h in hashes):
        raise ValueError(f"Hash domain smaller than d={dataset.d}")
    groups = len(hashes)

    # User i (0-based) is in group i mod g and sends (group)·b + h_group(x)
    membership = np.arange(dataset.n) % groups
    symbols = np.empty(dataset.n, dtype=np.int64)
    for j, hash_fn in enumerate(hashes):
        members = membership == j
        symbols[members] = j * b + hash_fn.hash_many(dataset.values[members])
    symbols = combine_inputs(symbols, fake)

    counts, transcript = augmented_shuffle(symbols, groups * b, distribution, beta, suite, rng,
                                           randomness, keep_hop_log)
    table = counts.reshape(groups, b)
    items = np.arange(1, dataset.d + 1)
    collected = np.zeros(dataset.d)
    for j, hash_fn in enumerate(hashes):
        collected += table[j, hash_fn.hash_many(items) - 1]

    n_total = symbols.size
    scale = b / (n_total * beta * (b - 1))
    estimates = scale * (collected - n_total * beta / b - groups * distribution.mean)
    return ProtocolOutput(kind, dataset.d, estimates, transcript=transcript, n_total=n_total, counts=counts)

def ch_run(dataset: CategoricalDataset, distribution: DummyCountDistribution, beta: float, hash_fn,
           suite: CipherSuite, rng: Rng, fake: Optional[FakeUsers] = None,
           randomness: Optional[ShufflerRandomness] = None, keep_hop_log: bool = True) -> ProtocolOutput:
    """CH: LNF over hash values in [b] with the collision-corrected estimator."""
    return _grouped_run(ProtocolKind.CH, dataset, distribution, beta, [hash_fn], suite, rng, fake,
                        randomness, keep_hop_log)

def gh_run(dataset: CategoricalDataset, distribution: DummyCountDistribution, beta: float, groups: int,
           b: int, suite: CipherSuite, rng: Rng, fake: Optional[FakeUsers] = None,
           randomness: Optional[ShufflerRandomness] = None, keep_hop_log: bool = True) -> ProtocolOutput:
    """GH: users split into g groups, each with its own hash drawn by the collector."""
    if not 1 <= groups <= dataset.n:
        raise ValueError(f"Group count must lie in [1, n={dataset.n}], got {groups}")
    generator = rng.stream(STREAM_COLLECTOR)
    hashes = [sample_hash(dataset.d, b, generator) for _ in range(groups)]
    kind = ProtocolKind.UH if groups == dataset.n and groups > 1 else ProtocolKind.GH
    return _grouped_run(kind, dataset, distribution, beta, hashes, suite, rng, fake, randomness, keep_hop_log)

def uh_run(dataset: CategoricalDataset, distribution: DummyCountDistribution, beta: float, b: int,
           suite: CipherSuite, rng: Rng, fake: Optional[FakeUsers] = None,
           randomness: Optional[ShufflerRandomness] = None, keep_hop_log: bool = True) -> ProtocolOutput:
    """UH: a separate hash per user."""
    return gh_run(dataset, distribution, beta, dataset.n, b, suite, rng, fake, randomness, keep_hop_log)
