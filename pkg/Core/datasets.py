"""Dataset module for categorical and key-value user data."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from Core.exceptions import DatasetError
from Core.utils.constants import STREAM_DATA
from Core.utils.rng import Rng

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class CategoricalDataset:
    """Users' items, each an integer in [1, d]."""
    values: np.ndarray
    d: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64)
        object.__setattr__(self, 'values', values)
        if self.d < 1:
            raise DatasetError(f"Domain size must be at least 1, got {self.d}")
        if values.ndim != 1 or values.size < 1:
            raise DatasetError("A dataset needs at least one user")
        if values.min() < 1 or values.max() > self.d:
            bad = int(np.flatnonzero((values < 1) | (values > self.d))[0])
            raise DatasetError(f"User {bad + 1} holds item {values[bad]} outside [1, {self.d}]")

    @property
    def n(self) -> int:
        """Number of users."""
        return int(self.values.size)

    def counts(self) -> np.ndarray:
        """Per-item counts, index 0 is item 1."""
        return np.bincount(self.values, minlength=self.d + 1)[1:]

    def subset(self, mask: np.ndarray) -> "CategoricalDataset":
        """Dataset restricted to users where mask is true."""
        return CategoricalDataset(self.values[mask], self.d)

    def extended(self, extra_values: Sequence[int]) -> "CategoricalDataset":
        """Dataset with additional users appended."""
        return CategoricalDataset(np.concatenate([self.values, np.asarray(extra_values, dtype=np.int64)]), self.d)

@dataclass(frozen=True)
class KVDataset:
    """Key-value pairs, stored flat: pair j belongs to user `users[j]` (0-based)."""
    users: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    n: int
    d: int
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64)
        keys = np.asarray(self.keys, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if not (users.size == keys.size == values.size):
            raise DatasetError("users, keys and values must have equal length")
        if self.n < 1 or self.d < 1:
            raise DatasetError(f"Invalid sizes n={self.n}, d={self.d}")

        # Group pairs by user so per-user slices are contiguous
        order = np.lexsort((keys, users))
        users, keys, values = users[order], keys[order], values[order]

        if users.size and (users.min() < 0 or users.max() >= self.n):
            raise DatasetError("Pair assigned to a user outside [1, n]")
        if keys.size and (keys.min() < 1 or keys.max() > self.d):
            raise DatasetError(f"Key outside [1, {self.d}]")
        if values.size and (np.any(values < -1) or np.any(values > 1)):
            raise DatasetError("Values must lie in [-1, 1]")
        duplicate = (users[1:] == users[:-1]) & (keys[1:] == keys[:-1])
        if np.any(duplicate):
            raise DatasetError(f"User {users[1:][duplicate][0] + 1} holds key {keys[1:][duplicate][0]} twice")

        per_user = np.bincount(users, minlength=self.n)
        if np.any(per_user < 1):
            raise DatasetError(f"User {int(np.argmin(per_user)) + 1} holds no pairs")

        offsets = np.concatenate([[0], np.cumsum(per_user)])
        object.__setattr__(self, 'users', users)
        object.__setattr__(self, 'keys', keys)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'offsets', offsets)

    @classmethod
    def from_records(cls, records: Sequence[Sequence[Tuple[int, float]]], d: int) -> "KVDataset":
        """Build from per-user lists of (key, value) pairs."""
        users, keys, values = [], [], []
        for index, pairs in enumerate(records):
            for key, value in pairs:
                users.append(index)
                keys.append(key)
                values.append(value)
        return cls(np.array(users), np.array(keys), np.array(values), n=len(records), d=d)

    def pair_counts(self) -> np.ndarray:
        """|x_j| for every user."""
        return np.diff(self.offsets)

    def pairs_of(self, user: int) -> List[Tuple[int, float]]:
        """Pairs held by user (0-based index)."""
        start, stop = self.offsets[user], self.offsets[user + 1]
        return [(int(k), float(v)) for k, v in zip(self.keys[start:stop], self.values[start:stop])]

    def subset(self, mask: np.ndarray) -> "KVDataset":
        """Dataset restricted to users where mask is true."""
        kept = np.flatnonzero(mask)
        if kept.size == 0:
            raise DatasetError("User sample is empty")
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[kept] = np.arange(kept.size)
        pair_mask = mask[self.users]
        return KVDataset(remap[self.users[pair_mask]], self.keys[pair_mask], self.values[pair_mask],
                         n=int(kept.size), d=self.d)

@dataclass(frozen=True)
class FrequencyVector:
    """Relative frequencies of items 1..d."""
    entries: np.ndarray

    def item(self, i: int) -> float:
        """Frequency of item i (1-based)."""
        return float(self.entries[i - 1])

    @property
    def d(self) -> int:
        return int(self.entries.size)

@dataclass(frozen=True)
class KVStatistics:
    """Key frequencies Φ and mean values Ψ."""
    phi: np.ndarray
    psi: np.ndarray

def true_frequencies(dataset: CategoricalDataset) -> FrequencyVector:
    """Exact frequency of each item."""
    return FrequencyVector(dataset.counts() / dataset.n)

def true_kv_statistics(dataset: KVDataset) -> KVStatistics:
    """Key frequencies and per-key mean values; Ψ is 0 for empty keys."""
    holders = np.bincount(dataset.keys, minlength=dataset.d + 1)[1:]
    totals = np.bincount(dataset.keys, weights=dataset.values, minlength=dataset.d + 1)[1:]
    psi = np.zeros(dataset.d)
    held = holders > 0
    psi[held] = totals[held] / holders[held]
    return KVStatistics(phi=holders / dataset.n, psi=psi)

def zipf_probabilities(d: int, exponent: float) -> np.ndarray:
    """Rank-frequency law p_r ∝ r^(-exponent), r = 1..d."""
    if exponent < 0:
        raise ValueError(f"Zipf exponent must be nonnegative, got {exponent}")
    log_weights = -exponent * np.log(np.arange(1, d + 1, dtype=float))
    weights = np.exp(log_weights - log_weights.max())
    return weights / weights.sum()

def synth_zipf(n: int, d: int, exponent: float, seed: int) -> CategoricalDataset:
    """Synthetic categorical dataset with a Zipf rank-frequency shape.

    Exponent 0 gives the uniform law over [d]. A negative exponent raises
    ValueError.
    """
    if n < 1 or d < 1:
        raise ValueError(f"n and d must be at least 1, got n={n}, d={d}")
    generator = Rng(seed).stream(STREAM_DATA)
    probabilities = zipf_probabilities(d, exponent)
    values = generator.choice(d, size=n, p=probabilities) + 1
    logger.debug(f"Generated Zipf dataset n={n}, d={d}, exponent={exponent}")
    return CategoricalDataset(values, d)

def _draw_pair_counts(n: int, d: int, law: Sequence, generator: np.random.Generator) -> np.ndarray:
    """Number of pairs per user under a pairs-per-user law."""
    kind = law[0]
    if kind == "fixed":
        counts = np.full(n, int(law[1]))
    elif kind == "uniform":
        counts = generator.integers(int(law[1]), int(law[2]) + 1, size=n)
    elif kind == "zipf":
        counts = generator.zipf(float(law[1]), size=n)
    else:
        raise ValueError(f"Unknown pairs-per-user law: {kind}")
    return np.clip(counts, 1, d)

def _draw_values(keys: np.ndarray, law: Sequence, generator: np.random.Generator) -> np.ndarray:
    """Values for each pair under a value law."""
    kind = law[0]
    if kind == "uniform":
        return generator.uniform(-1.0, 1.0, size=keys.size)
    if kind == "constant":
        return np.full(keys.size, float(law[1]))
    if kind == "beta":
        return 2.0 * generator.beta(float(law[1]), float(law[2]), size=keys.size) - 1.0
    if kind == "balanced":
        # Holders of each key alternate +1, -1 in user order
        order = np.argsort(keys, kind='stable')
        sorted_keys = keys[order]
        starts = np.searchsorted(sorted_keys, sorted_keys, side='left')
        rank = np.arange(keys.size) - starts
        values = np.empty(keys.size)
        values[order] = np.where(rank % 2 == 0, 1.0, -1.0)
        return values
    raise ValueError(f"Unknown value law: {kind}")

def synth_kv(n: int, d: int, pairs_law: Sequence = ("fixed", 1), value_law: Sequence = ("uniform",),
             seed: int = 0, key_exponent: float = 1.0) -> KVDataset:
    """Synthetic key-value dataset with Zipf-skewed key popularity."""
    if n < 1 or d < 1:
        raise ValueError(f"n and d must be at least 1, got n={n}, d={d}")
    generator = Rng(seed).stream(STREAM_DATA)
    popularity = zipf_probabilities(d, key_exponent)
    counts = _draw_pair_counts(n, d, pairs_law, generator)

    if np.all(counts == 1):
        keys = generator.choice(d, size=n, p=popularity) + 1
        users = np.arange(n)
    else:
        key_lists = [generator.choice(d, size=int(m), replace=False, p=popularity) + 1 for m in counts]
        keys = np.concatenate(key_lists)
        users = np.repeat(np.arange(n), counts)

    values = _draw_values(keys, value_law, generator)
    return KVDataset(users, keys, values, n=n, d=d)

def user_sample(dataset, probability: float, rng: Rng, on_empty: str = "resample", max_attempts: int = 100):
    """Bernoulli sample of users (categorical or key-value)."""
    if not 0 < probability <= 1:
        raise ValueError(f"Sampling probability must be in (0, 1], got {probability}")
    if probability == 1:
        return dataset

    generator = rng.stream(STREAM_DATA)
    for attempt in range(max_attempts):
        mask = generator.random(dataset.n) < probability
        if mask.any():
            return dataset.subset(mask)
        if on_empty != "resample":
            break
        logger.warning(f"Empty user sample on attempt {attempt + 1}, resampling")
    raise DatasetError("User sample is empty")

def load_categorical_csv(path: str, d: Optional[int] = None) -> CategoricalDataset:
    """Load a `user_id,item` CSV; d defaults to the largest item seen."""
    frame = _read_csv(path, ['user_id', 'item'])
    items = _integer_column(frame, 'item', path)
    domain = int(d) if d is not None else int(items.max())
    bad = np.flatnonzero((items < 1) | (items > domain))
    if bad.size:
        raise DatasetError(f"{path}:{bad[0] + 2}: item {items[bad[0]]} outside [1, {domain}]")
    return CategoricalDataset(items, domain)

def load_kv_csv(path: str, d: Optional[int] = None) -> KVDataset:
    """Load a `user_id,key,value` CSV; user ids are relabelled densely in order of appearance."""
    frame = _read_csv(path, ['user_id', 'key', 'value'])
    keys = _integer_column(frame, 'key', path)
    values = pd.to_numeric(frame['value'], errors='coerce').to_numpy()
    bad = np.flatnonzero(np.isnan(values) | (values < -1) | (values > 1))
    if bad.size:
        raise DatasetError(f"{path}:{bad[0] + 2}: value {frame['value'].iloc[bad[0]]} outside [-1, 1]")
    domain = int(d) if d is not None else int(keys.max())
    bad = np.flatnonzero((keys < 1) | (keys > domain))
    if bad.size:
        raise DatasetError(f"{path}:{bad[0] + 2}: key {keys[bad[0]]} outside [1, {domain}]")
    users, _ = pd.factorize(frame['user_id'], sort=False)
    try:
        return KVDataset(users, keys, values, n=int(users.max()) + 1, d=domain)
    except DatasetError as e:
        raise DatasetError(f"{path}: {e}")

def save_categorical_csv(dataset: CategoricalDataset, path: str):
    """Write a dataset as `user_id,item`."""
    frame = pd.DataFrame({'user_id': np.arange(1, dataset.n + 1), 'item': dataset.values})
    frame.to_csv(path, index=False)

def save_kv_csv(dataset: KVDataset, path: str):
    """Write a dataset as `user_id,key,value`."""
    frame = pd.DataFrame({'user_id': dataset.users + 1, 'key': dataset.keys, 'value': dataset.values})
    frame.to_csv(path, index=False)

def _read_csv(path: str, columns: List[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, encoding='utf-8', dtype=str, keep_default_na=False)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise DatasetError(f"Cannot read dataset {path}: {e}")
    if list(frame.columns) != columns:
        raise DatasetError(f"{path}:1: expected header {','.join(columns)}, got {','.join(frame.columns)}")
    if frame.empty:
        raise DatasetError(f"{path}: no rows")
    return frame

def _integer_column(frame: pd.DataFrame, column: str, path: str) -> np.ndarray:
    parsed = pd.to_numeric(frame[column], errors='coerce')
    bad = np.flatnonzero(parsed.isna().to_numpy() | (parsed.to_numpy() % 1 != 0))
    if bad.size:
        raise DatasetError(f"{path}:{bad[0] + 2}: {column} '{frame[column].iloc[bad[0]]}' is not an integer")
    return parsed.to_numpy().astype(np.int64)
