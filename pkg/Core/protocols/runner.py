"""Uniform entry point that runs any protocol from one setup object."""

import logging
from dataclasses import dataclass, replace
from typing import Any, Optional

from Core.crypto import CipherSuite, MockCipherSuite
from Core.dummy import DummyCountDistribution
from Core.hashing import sample_hash
from Core.protocols.base import FakeUsers, ProtocolOutput, ShufflerRandomness
from Core.protocols.fme import FmeConfig, fme_run, proposal_star_run
from Core.protocols.grr import pure_grr_run
from Core.protocols.kv import kv_run
from Core.protocols.lnf import ch_run, gh_run, lnf_run
from Core.utils.constants import FilterLevel, ProtocolKind, STREAM_COLLECTOR
from Core.utils.rng import Rng

logger = logging.getLogger(__name__)

@dataclass
class ProtocolSetup:
    """Everything needed to run one protocol, apart from the data and randomness.

    LNF, CH and GH read `distribution` and `beta`; FME, Proposal* and KV read
    `fme`. When `hash_fn` is None a fresh hash is drawn by the collector on
    every run.
    """
    kind: ProtocolKind
    suite: CipherSuite = None
    beta: float = 1.0
    distribution: Optional[DummyCountDistribution] = None
    fme: Optional[FmeConfig] = None
    hash_fn: Any = None
    b: Optional[int] = None
    groups: int = 1
    kappa: int = 1
    extra_eps: Optional[float] = None
    eps0: Optional[float] = None
    filter_level: FilterLevel = FilterLevel.KEY
    keep_hop_log: bool = True

    def __post_init__(self):
        if self.suite is None:
            self.suite = self.fme.suite if self.fme is not None else MockCipherSuite()

    def hash_domain(self, d: int) -> int:
        """Domain the hash must cover for data over [d]."""
        if self.kind is ProtocolKind.KV:
            keys = d + self.kappa
            return keys if self.filter_level is FilterLevel.KEY else 2 * keys
        return d

    def hash_range(self) -> Optional[int]:
        return self.fme.b if self.fme is not None else self.b

    def draw_hash(self, d: int, rng: Rng):
        """The setup's fixed hash, or a fresh one drawn by the collector."""
        if self.hash_fn is not None:
            return self.hash_fn
        if self.hash_range() is None:
            return None
        return sample_hash(self.hash_domain(d), self.hash_range(), rng.stream(STREAM_COLLECTOR))

    def with_hash(self, hash_fn) -> "ProtocolSetup":
        return replace(self, hash_fn=hash_fn)

    def run(self, dataset, rng: Rng, fake: Optional[FakeUsers] = None,
            randomness: Optional[ShufflerRandomness] = None) -> ProtocolOutput:
        """Run the protocol once on `dataset`."""
        kind = self.kind
        if kind is ProtocolKind.LNF:
            return lnf_run(dataset, self.distribution, self.beta, self.suite, rng, fake, randomness,
                           self.keep_hop_log)
        if kind is ProtocolKind.CH:
            return ch_run(dataset, self.distribution, self.beta, self.draw_hash(dataset.d, rng), self.suite, rng,
                          fake, randomness, self.keep_hop_log)
        if kind in (ProtocolKind.GH, ProtocolKind.UH):
            groups = dataset.n if kind is ProtocolKind.UH else self.groups
            return gh_run(dataset, self.distribution, self.beta, groups, self.b, self.suite, rng, fake,
                          randomness, self.keep_hop_log)
        if kind is ProtocolKind.PURE_GRR:
            return pure_grr_run(dataset, self.eps0, self.suite, rng, fake, randomness, self.keep_hop_log)

        hash_fn = self.draw_hash(dataset.d, rng)
        if kind is ProtocolKind.FME:
            return fme_run(dataset, self.fme, hash_fn, rng, fake, randomness)
        if kind is ProtocolKind.PROPOSAL_STAR:
            return proposal_star_run(dataset, self.fme, self.extra_eps, hash_fn, rng, fake, randomness)
        if kind is ProtocolKind.KV:
            return kv_run(dataset, self.fme, self.kappa, hash_fn, rng, fake, randomness, self.filter_level)
        raise ValueError(f"Unsupported protocol: {kind}")

    def get_name(self) -> str:
        return self.kind.name.lower().replace('_', '-')
