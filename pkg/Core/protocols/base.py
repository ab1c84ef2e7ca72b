"""Shared protocol types: outputs, shuffler randomness and fake-user messages."""

import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from Core.dummy import DummyCountDistribution
from Core.transport import Transcript
from Core.utils.constants import ProtocolKind

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class FilterResult:
    """Selected hash values Λ^H, selected items Λ, the threshold used and the hash counts it saw."""
    selected_hashes: np.ndarray
    items: np.ndarray
    threshold: int
    counts: Optional[np.ndarray] = None

    def __contains__(self, item: int) -> bool:
        return bool(np.isin(item, self.items))

@dataclass
class ProtocolOutput:
    """Estimates of one run plus the selected set and transcript.

    Dense protocols fill `estimates` over all d items and leave `items` as
    None. Filtering protocols report only the items in `items`, with
    `estimates` (and `psi` for key-value data) aligned to them.
    """
    protocol: ProtocolKind
    d: int
    estimates: np.ndarray
    items: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None
    degenerate: Optional[np.ndarray] = None
    filter_result: Optional[FilterResult] = None
    transcript: Optional[Transcript] = None
    n_total: int = 0
    counts: Optional[np.ndarray] = None

    @property
    def selected(self) -> np.ndarray:
        """Reported items Λ (all of [d] for dense outputs)."""
        if self.items is None:
            return np.arange(1, self.d + 1)
        return self.items

    def estimate(self, item: int) -> Optional[float]:
        """f̂ (or Φ̂) of one item; None when it was not reported."""
        if self.items is None:
            return float(self.estimates[item - 1])
        position = np.searchsorted(self.items, item)
        if position < self.items.size and self.items[position] == item:
            return float(self.estimates[position])
        return None

    def dense(self) -> np.ndarray:
        """Length-d estimates with unreported items read as 0."""
        if self.items is None:
            return np.asarray(self.estimates, dtype=float)
        full = np.zeros(self.d)
        full[self.items - 1] = self.estimates
        return full

    def dense_kv(self) -> Tuple[np.ndarray, np.ndarray]:
        """(Φ̂, Ψ̂) over all keys with unreported keys read as (0, 1)."""
        phi = self.dense()
        psi = np.ones(self.d)
        if self.psi is not None:
            psi[self.selected - 1] = self.psi
        return phi, psi

@dataclass(frozen=True)
class FakeUsers:
    """Messages of injected fake users, already in the protocol's message grammar.

    `payloads` are the symbols users encrypt (items for LNF/FME, hash values
    for CH, group symbols for GH, pair symbols for KV); `hashes` are the hash
    values sent alongside them by FME and KV.
    """
    payloads: np.ndarray
    hashes: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(np.asarray(self.payloads).size)

class ShufflerRandomness:
    """Random choices made by the shuffler."""

    def __init__(self, generator: np.random.Generator):
        self.generator = generator

    def keep_mask(self, size: int, beta: float) -> np.ndarray:
        """Which incoming messages survive sampling."""
        if beta >= 1:
            return np.ones(size, dtype=bool)
        return self.generator.random(size) < beta

    def dummy_counts(self, distribution: DummyCountDistribution, slots: int, stage: str) -> np.ndarray:
        """Dummy count for each slot (hash value, item or pair)."""
        return np.asarray(distribution.sample(self.generator, slots), dtype=np.int64)

    def permutation(self, size: int, stage: str) -> np.ndarray:
        """Order in which messages leave: output j is input perm[j]."""
        return self.generator.permutation(size)

class ScriptedRandomness(ShufflerRandomness):
    """Shuffler choices read from a replay document.

    The document holds `keep` (0/1 per incoming message, default all kept),
    `dummies` and `permutations` keyed by stage name; permutations are
    1-based.
    """

    def __init__(self, document: Dict[str, Any]):
        super().__init__(None)
        self.keep = document.get('keep')
        self.dummies = {k: np.asarray(v, dtype=np.int64) for k, v in document.get('dummies', {}).items()}
        self.permutations = {k: np.asarray(v, dtype=np.int64) - 1
                             for k, v in document.get('permutations', {}).items()}

    @classmethod
    def from_file(cls, path: str) -> "ScriptedRandomness":
        with open(path, 'r', encoding='utf-8') as f:
            return cls(json.load(f)['shuffler'])

    def keep_mask(self, size: int, beta: float) -> np.ndarray:
        if self.keep is None:
            return np.ones(size, dtype=bool)
        if len(self.keep) != size:
            raise ValueError(f"Replay keeps {len(self.keep)} decisions for {size} messages")
        return np.asarray(self.keep, dtype=bool)

    def dummy_counts(self, distribution: DummyCountDistribution, slots: int, stage: str) -> np.ndarray:
        counts = self.dummies.get(stage)
        if counts is None or counts.size != slots:
            raise ValueError(f"Replay has no {slots} dummy counts for stage '{stage}'")
        return counts

    def permutation(self, size: int, stage: str) -> np.ndarray:
        perm = self.permutations.get(stage)
        if perm is None:
            return np.arange(size)
        if perm.size != size or not np.array_equal(np.sort(perm), np.arange(size)):
            raise ValueError(f"Replay permutation for stage '{stage}' is not a permutation of {size}")
        return perm

def combine_inputs(values: np.ndarray, fake: Optional[FakeUsers]) -> np.ndarray:
    """Genuine user symbols followed by fake ones."""
    if fake is None or len(fake) == 0:
        return np.asarray(values, dtype=np.int64)
    return np.concatenate([np.asarray(values, dtype=np.int64), np.asarray(fake.payloads, dtype=np.int64)])
