"""The filtering two-stage augmented shuffle (FME) and its post-noise variant."""

import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from Core.crypto import CipherSuite, MockCipherSuite
from Core.datasets import CategoricalDataset
from Core.dummy import (DummyCountDistribution, PrivacyBudget, calibrate_fme, certify_dp,
                        two_sided_geometric)
from Core.exceptions import RoundViolation
from Core.protocols.base import (FakeUsers, FilterResult, ProtocolOutput, ShufflerRandomness,
                                 combine_inputs)
from Core.protocols.filtering import filter_items
from Core.transport import (COLLECTOR, SHUFFLER, Bundle, ItemSetMessage, Network, Transcript,
                            assert_one_round)
from Core.utils.constants import (BOTTOM, DEFAULT_ALPHA, DEFAULT_SECURITY_BITS, ProtocolKind,
                                  STREAM_COLLECTOR, STREAM_SHUFFLER)
from Core.utils.rng import Rng

logger = logging.getLogger(__name__)

@dataclass
class FmeConfig:
    """Parameters of one filtering run."""
    d1: DummyCountDistribution
    d2: DummyCountDistribution
    beta: float
    l: int
    b: int
    alpha: float = DEFAULT_ALPHA
    suite: CipherSuite = field(default_factory=MockCipherSuite)
    budget: Optional[PrivacyBudget] = None
    security_bits: int = DEFAULT_SECURITY_BITS
    keep_hop_log: bool = True

    @classmethod
    def calibrated(cls, budget: PrivacyBudget, beta: float, l: int, b: int, alpha: float = DEFAULT_ALPHA,
                   suite: Optional[CipherSuite] = None, **kwargs) -> "FmeConfig":
        """Config whose D1 and D2 are calibrated for `budget`."""
        d1, d2 = calibrate_fme(budget, beta)
        return cls(d1=d1, d2=d2, beta=beta, l=l, b=b, alpha=alpha, suite=suite or MockCipherSuite(),
                   budget=budget, **kwargs)

    def validate(self, domain: int, hash_fn=None):
        """Raise ValueError unless 1 <= l <= b <= domain and β, α are in range."""
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 1 <= self.l <= self.b <= domain:
            raise ValueError(f"Need 1 <= l <= b <= {domain}, got l={self.l}, b={self.b}")
        if hash_fn is not None and (hash_fn.b != self.b or hash_fn.d < domain):
            raise ValueError(f"Hash maps [{hash_fn.d}] to [{hash_fn.b}], expected [{domain}] to [{self.b}]")

    def is_certified(self) -> bool:
        """Whether D1 and D2 meet the budget's per-stage targets."""
        if self.budget is None:
            return False
        (eps1, delta1), (eps2, delta2) = self.budget.split_parts()
        return (certify_dp(self.d1, self.beta, eps1 / 2) <= delta1 / 2
                and certify_dp(self.d2, 1.0, eps2 / 2) <= delta2 / 2)

@dataclass
class TwoStageResult:
    filter_result: FilterResult
    counts: np.ndarray
    transcript: Transcript
    kept: int

def two_stage_shuffle(payloads: np.ndarray, hashes: np.ndarray, payload_slots: int, config: FmeConfig,
                      hash_fn, rng: Rng, randomness: Optional[ShufflerRandomness] = None,
                      restrict: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                      expand: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                      hash_noise: float = 0.0) -> TwoStageResult:
    """Run both stages of the filtering shuffle through the network.

    Each user sends ⟨E_d[h], E_d[E_s[E_d[x]]]⟩. `restrict` narrows the
    preimages to real units, `expand` maps the selected units to the
    symbols receiving second-stage dummies, and `hash_noise` is the decay
    of extra two-sided geometric noise on the hash counts.
    """
    suite = config.suite
    if not suite.fits(payload_slots):
        raise ValueError(f"{payload_slots} symbols do not fit a {suite.plaintext_bits}-bit payload")
    randomness = randomness or ShufflerRandomness(rng.stream(STREAM_SHUFFLER))
    collector_gen = rng.stream(STREAM_COLLECTOR)
    collector = suite.keygen(config.security_bits, collector_gen)
    shuffler = suite.keygen(config.security_bits, rng.stream(STREAM_SHUFFLER))
    pk_d, pk_s = collector.public, shuffler.public
    triple = [pk_d, pk_s, pk_d]
    b = config.b

    network = Network(payloads.size, config.keep_hop_log)
    with network.stage("users"):
        network.send_from_users(SHUFFLER, Bundle((suite.encrypt_batch(hashes, [pk_d]),
                                                  suite.encrypt_batch(payloads, triple))))

    with network.stage("shuffler-first"):
        incoming = network.receive(SHUFFLER)
        keep = randomness.keep_mask(len(incoming), config.beta)
        kept = int(keep.sum())
        z1 = randomness.dummy_counts(config.d1, b, "first")
        dummy_hashes = np.repeat(np.arange(1, b + 1), z1)
        dummies = Bundle((suite.encrypt_batch(dummy_hashes, [pk_d]),
                          suite.encrypt_batch(np.full(dummy_hashes.size, BOTTOM), triple)))
        pool = incoming.take(np.flatnonzero(keep)).concat(dummies)
        pi = randomness.permutation(len(pool), "first")
        own_dummy = np.concatenate([np.zeros(kept, dtype=bool), np.ones(dummy_hashes.size, dtype=bool)])[pi]
        logger.debug(f"Stage one: kept {kept} of {keep.size} messages, added {dummy_hashes.size} dummies")
        network.send(SHUFFLER, COLLECTOR, pool.take(pi))

    with network.stage("collector-filter"):
        received = network.receive(COLLECTOR)
        hash_values = suite.decrypt_batch(received.parts[0], collector.secret)
        doubles = suite.decrypt_batch(received.parts[1], collector.secret)
        hash_counts = np.bincount(hash_values, minlength=b + 1)[1:]
        if hash_noise > 0:
            hash_counts = np.maximum(hash_counts + two_sided_geometric(hash_noise, collector_gen, b), 0)
        result = filter_items(hash_counts, config.alpha, config.d1, config.l, hash_fn, restrict)
        unselected = ~np.isin(hash_values, result.selected_hashes)
        doubles = doubles.replace(unselected, suite.encrypt_batch(np.full(int(unselected.sum()), BOTTOM),
                                                                  [pk_d, pk_s]))
        logger.debug(f"Selected {result.selected_hashes.size} hash values, {result.items.size} units "
                     f"(threshold {result.threshold})")
        tau1 = suite.size_model()[0]
        network.send(COLLECTOR, SHUFFLER, ItemSetMessage(result.items, hash_fn.d, tau1))
        network.send(COLLECTOR, SHUFFLER, doubles)

    with network.stage("shuffler-second"):
        selected = network.receive(SHUFFLER)
        singles = suite.decrypt_batch(network.receive(SHUFFLER), shuffler.secret)
        genuine = singles.take(np.flatnonzero(~own_dummy))
        assert len(genuine) == kept, "Dummy removal left a different number of messages than were sampled"
        slots = selected.items if expand is None else expand(selected.items)
        z2 = randomness.dummy_counts(config.d2, slots.size, "second")
        extra = suite.encrypt_batch(np.repeat(slots, z2), [pk_d])
        pool = genuine.concat(extra)
        logger.debug(f"Stage two: {kept} genuine messages, {len(extra)} dummies over {slots.size} slots")
        network.send(SHUFFLER, COLLECTOR, pool.take(randomness.permutation(len(pool), "second")))

    with network.stage("collector-estimate"):
        symbols = suite.decrypt_batch(network.receive(COLLECTOR), collector.secret)
        counts = np.bincount(symbols, minlength=payload_slots + 1)[1:]

    transcript = network.close()
    if not assert_one_round(transcript):
        raise RoundViolation("A user sent more than one message or was contacted by a server")
    return TwoStageResult(result, counts, transcript, kept)

def user_hashes(values: np.ndarray, fake: Optional[FakeUsers], hash_fn) -> np.ndarray:
    """Hash of each genuine user's value followed by the fake users' claimed hashes."""
    hashes = hash_fn.hash_many(values)
    if fake is None or len(fake) == 0:
        return hashes
    claimed = fake.hashes if fake.hashes is not None else hash_fn.hash_many(fake.payloads)
    return np.concatenate([hashes, np.asarray(claimed, dtype=np.int64)])

def fme_run(dataset: CategoricalDataset, config: FmeConfig, hash_fn, rng: Rng,
            fake: Optional[FakeUsers] = None, randomness: Optional[ShufflerRandomness] = None,
            post_noise_eps: Optional[float] = None) -> ProtocolOutput:
    """FME: estimate f̂_i = (c̃_i - μ2) / (Nβ) for the selected items only."""
    config.validate(dataset.d, hash_fn)
    payloads = combine_inputs(dataset.values, fake)
    hashes = user_hashes(dataset.values, fake, hash_fn)
    noise = math.exp(-post_noise_eps / 4) if post_noise_eps else 0.0

    run = two_stage_shuffle(payloads, hashes, dataset.d, config, hash_fn, rng, randomness, hash_noise=noise)
    items = run.filter_result.items
    counts = run.counts[items - 1].astype(float)
    if noise > 0:
        counts = counts + two_sided_geometric(noise, rng.stream(STREAM_COLLECTOR), items.size)

    n_total = payloads.size
    estimates = (counts - config.d2.mean) / (n_total * config.beta)
    kind = ProtocolKind.PROPOSAL_STAR if noise > 0 else ProtocolKind.FME
    return ProtocolOutput(kind, dataset.d, estimates, items=items, filter_result=run.filter_result,
                          transcript=run.transcript, n_total=n_total, counts=run.counts)

def proposal_star_run(dataset: CategoricalDataset, config: FmeConfig, extra_eps: float, hash_fn, rng: Rng,
                      fake: Optional[FakeUsers] = None,
                      randomness: Optional[ShufflerRandomness] = None) -> ProtocolOutput:
    """FME plus Geo(e^(-ε/4)) noise on every hash count and every selected item count."""
    if extra_eps <= 0:
        raise ValueError(f"Extra epsilon must be positive, got {extra_eps}")
    output = fme_run(dataset, config, hash_fn, rng, fake, randomness, post_noise_eps=extra_eps)
    output.protocol = ProtocolKind.PROPOSAL_STAR
    return output
