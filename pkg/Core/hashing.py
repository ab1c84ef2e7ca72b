"""Universal hashing with preimage enumeration."""

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from Core.utils.helpers import next_prime_at_least

@dataclass(frozen=True)
class UniversalHash:
    """h(x) = ((a1 x + a0) mod p) mod b, exposed 1-based as [b]."""
    p: int
    a1: int
    a0: int
    b: int
    d: int

    def __post_init__(self):
        if not 1 <= self.b <= self.p:
            raise ValueError(f"Hash range b={self.b} must lie in [1, p={self.p}]")
        if not 1 <= self.a1 <= self.p - 1 and self.p > 1:
            raise ValueError(f"a1={self.a1} must lie in [1, p-1]")

    def hash(self, x: int) -> int:
        """Hash one item in [d]."""
        if not 1 <= x <= self.d:
            raise ValueError(f"Item {x} outside hash domain [1, {self.d}]")
        return ((self.a1 * x + self.a0) % self.p) % self.b + 1

    def hash_many(self, items: np.ndarray) -> np.ndarray:
        """Vectorized hash of items in [d]."""
        items = np.asarray(items, dtype=np.int64)
        if items.size and (items.min() < 1 or items.max() > self.d):
            raise ValueError(f"Items outside hash domain [1, {self.d}]")
        # Python ints avoid overflow of a1*x for domains near 2^63
        if self.p < 2 ** 31:
            return (self.a1 * items + self.a0) % self.p % self.b + 1
        return np.array([self.hash(int(x)) for x in items], dtype=np.int64)

    def preimages(self, value: int) -> List[int]:
        """Sorted items x in [d] with h(x) = value."""
        if not 1 <= value <= self.b:
            raise ValueError(f"Hash value {value} outside [1, {self.b}]")
        return self.preimages_many([value]).tolist()

    def preimages_many(self, values: Sequence[int]) -> np.ndarray:
        """Sorted union of preimages of several hash values."""
        values = np.asarray(sorted(set(int(v) for v in values)), dtype=np.int64)
        if values.size == 0:
            return np.zeros(0, dtype=np.int64)
        inverse = pow(self.a1, -1, self.p)

        # y ranges over residues congruent to v-1 modulo b inside [0, p-1]
        scans = (self.p - 1 - (values - 1)) // self.b + 1
        candidates = np.concatenate([np.arange(v - 1, self.p, self.b, dtype=np.int64) for v in values])
        if self.p < 2 ** 31:
            x = (inverse * ((candidates - self.a0) % self.p)) % self.p
        else:
            x = np.array([(inverse * ((int(y) - self.a0) % self.p)) % self.p for y in candidates], dtype=np.int64)

        # Residue 0 stands for x = p when p itself is in the domain
        x = np.where(x == 0, self.p, x)
        x = x[(x >= 1) & (x <= self.d)]
        assert candidates.size == int(scans.sum())
        return np.sort(x)

    def scan_cost(self) -> int:
        """Candidates examined per preimage query."""
        return -(-self.p // self.b)

class TableHash:
    """Hash defined by an explicit lookup table, used to replay fixed examples."""

    def __init__(self, table: Dict[int, int], b: int, d: int):
        missing = [x for x in range(1, d + 1) if x not in table]
        if missing:
            raise ValueError(f"Hash table has no entry for items {missing[:5]}")
        self.b = b
        self.d = d
        self._values = np.array([table[x] for x in range(1, d + 1)], dtype=np.int64)
        if self._values.min() < 1 or self._values.max() > b:
            raise ValueError(f"Hash table values must lie in [1, {b}]")

    def hash(self, x: int) -> int:
        if not 1 <= x <= self.d:
            raise ValueError(f"Item {x} outside hash domain [1, {self.d}]")
        return int(self._values[x - 1])

    def hash_many(self, items: np.ndarray) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        if items.size and (items.min() < 1 or items.max() > self.d):
            raise ValueError(f"Items outside hash domain [1, {self.d}]")
        return self._values[items - 1]

    def preimages(self, value: int) -> List[int]:
        return self.preimages_many([value]).tolist()

    def preimages_many(self, values: Sequence[int]) -> np.ndarray:
        return np.flatnonzero(np.isin(self._values, list(values))) + 1

def sample_hash(d: int, b: int, generator: np.random.Generator) -> UniversalHash:
    """Draw a member of the family with a prime p in [d, 2d)."""
    if d < 1 or not 1 <= b <= d:
        raise ValueError(f"Need d >= 1 and 1 <= b <= d, got d={d}, b={b}")
    p = next_prime_at_least(d)
    a1 = int(generator.integers(1, p)) if p > 1 else 1
    a0 = int(generator.integers(0, p))
    return UniversalHash(p=p, a1=a1, a0=a0, b=b, d=d)
