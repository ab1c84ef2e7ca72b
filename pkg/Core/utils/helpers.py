"""Helper functions for the ShuffleFME framework."""

import math
import json
import hashlib
from typing import Any, Dict, Iterable, Tuple

import numpy as np

# Bases that make Miller-Rabin deterministic below 3.3e24
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)

def is_prime(value: int) -> bool:
    """Deterministic Miller-Rabin primality test."""
    if value < 2:
        return False
    for base in _MR_BASES:
        if value % base == 0:
            return value == base

    d, s = value - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1

    for base in _MR_BASES:
        x = pow(base, d, value)
        if x in (1, value - 1):
            continue
        for _ in range(s - 1):
            x = pow(x, 2, value)
            if x == value - 1:
                break
        else:
            return False
    return True

def next_prime_at_least(value: int) -> int:
    """Smallest prime p >= value."""
    candidate = max(2, int(value))
    while not is_prime(candidate):
        candidate += 1
    return candidate

def bits_for(symbols: int) -> int:
    """Bits needed to write any of `symbols` distinct values, i.e. ceil(log2(symbols))."""
    if symbols <= 1:
        return 1
    return int(symbols - 1).bit_length()

def payload_bytes(max_symbol: int, minimum: int = 4) -> int:
    """Fixed payload width able to carry symbols 0..max_symbol."""
    return max(minimum, math.ceil(bits_for(max_symbol + 1) / 8))

def config_hash(document: Dict[str, Any]) -> str:
    """Stable md5 of a JSON-serializable document."""
    canonical = json.dumps(document, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.md5(canonical.encode('utf-8')).hexdigest()

def mean_and_stderr(samples: Iterable[float]) -> Tuple[float, float]:
    """Sample mean and standard error of the mean."""
    values = np.asarray(list(samples), dtype=float)
    if values.size == 0:
        return float('nan'), float('nan')
    if values.size == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))

def relative_error(predicted: float, measured: float) -> float:
    """|measured - predicted| / |predicted| (absolute error when predicted is 0)."""
    if predicted == 0:
        return abs(measured)
    return abs(measured - predicted) / abs(predicted)

def parse_tau(text: str) -> Tuple[int, int, int]:
    """Parse a size model such as '712,1392,2072'."""
    parts = [p for p in text.replace(' ', '').split(',') if p]
    if len(parts) != 3:
        raise ValueError(f"Size model needs three values, got: {text}")
    tau = tuple(int(p) for p in parts)
    if not (0 < tau[0] <= tau[1] <= tau[2]):
        raise ValueError(f"Size model must be positive and nondecreasing: {text}")
    return tau

def top_k_indices(truth: np.ndarray, k: int) -> np.ndarray:
    """0-based indices of the k largest entries; ties go to the smaller index."""
    order = np.lexsort((np.arange(truth.size), -np.asarray(truth)))
    return order[:k]
