"""Dummy-count distributions, the binary input mechanism and its DP certifier."""

import math
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import stats

from Core.exceptions import CalibrationError
from Core.utils.constants import DistributionKind, PMF_TAIL_CUTOFF

logger = logging.getLogger(__name__)

class DummyCountDistribution:
    """Distribution over non-negative dummy counts with an explicit, truncated pmf."""

    kind: DistributionKind = None

    def __init__(self, pmf: np.ndarray, params: Dict[str, Any]):
        pmf = np.asarray(pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size == 0 or np.any(pmf < 0):
            raise ValueError("pmf must be a nonempty nonnegative vector")
        total = pmf.sum()
        if abs(total - 1.0) > 1e-12:
            pmf = pmf / total
        self.pmf = pmf
        self.params = dict(params)
        support = np.arange(pmf.size)
        self.mean = float(np.dot(support, pmf))
        self.variance = float(np.dot((support - self.mean) ** 2, pmf))
        self._cdf = np.cumsum(pmf)
        self._cdf[-1] = 1.0
        # tail[z] = Pr[Z >= z]
        tail = np.minimum(np.cumsum(pmf[::-1])[::-1], 1.0)
        tail[0] = 1.0
        self._tail = np.concatenate([tail, [0.0]])

    @property
    def cutoff(self) -> int:
        """Largest value with nonzero mass in the stored support."""
        return self.pmf.size - 1

    def log_pmf(self) -> np.ndarray:
        """Natural log of the pmf (-inf where the mass is zero)."""
        with np.errstate(divide='ignore'):
            return np.log(self.pmf)

    def tail(self, z: int) -> float:
        """Pr[Z >= z]."""
        if z <= 0:
            return 1.0
        if z >= self._tail.size:
            return 0.0
        return float(self._tail[z])

    def threshold(self, alpha: float) -> int:
        """Smallest integer z with Pr[Z >= z] <= alpha."""
        passing = np.flatnonzero(self._tail <= alpha)
        return int(passing[0])

    def sample(self, generator: np.random.Generator, size: Optional[int] = None):
        """Draw counts by inverse transform over the stored pmf."""
        draws = np.searchsorted(self._cdf, generator.random(size), side='right')
        draws = np.minimum(draws, self.cutoff)
        if size is None:
            return int(draws)
        return draws.astype(np.int64)

    def describe(self) -> Dict[str, Any]:
        """Plain summary for logs and reports."""
        return {'kind': self.kind.name.lower(), **self.params, 'mean': self.mean, 'variance': self.variance}

    def __repr__(self) -> str:
        args = ', '.join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.__class__.__name__}({args})"

class BinomialDistribution(DummyCountDistribution):
    """Binomial(m, p) dummy counts."""

    kind = DistributionKind.BINOMIAL

    def __init__(self, m: int, p: float):
        if m < 0 or not 0 <= p <= 1:
            raise ValueError(f"Invalid binomial parameters m={m}, p={p}")
        super().__init__(stats.binom.pmf(np.arange(m + 1), m, p), {'m': m, 'p': p})

    def sample(self, generator: np.random.Generator, size: Optional[int] = None):
        draws = generator.binomial(self.params['m'], self.params['p'], size)
        return int(draws) if size is None else draws.astype(np.int64)

class PointMass(DummyCountDistribution):
    """Always k dummies."""

    kind = DistributionKind.POINT_MASS

    def __init__(self, k: int = 0):
        if k < 0:
            raise ValueError(f"Point mass must be nonnegative, got {k}")
        pmf = np.zeros(k + 1)
        pmf[k] = 1.0
        super().__init__(pmf, {'k': k})

    def sample(self, generator: np.random.Generator, size: Optional[int] = None):
        if size is None:
            return self.params['k']
        return np.full(size, self.params['k'], dtype=np.int64)

class AsymmetricGeometric(DummyCountDistribution):
    """Geometric decay around an offset.

    The mass at c is proportional to decay^(c - offset) above the offset and
    left_decay^(offset - c) below it; mass that would fall below zero is
    folded onto zero. left_decay=0 gives the one-sided form.
    """

    kind = DistributionKind.ASYMMETRIC_GEOMETRIC

    def __init__(self, decay: float, offset: int = 0, left_decay: float = 0.0):
        if not 0 < decay < 1 or not 0 <= left_decay < 1 or offset < 0:
            raise ValueError(f"Invalid parameters decay={decay}, offset={offset}, left_decay={left_decay}")
        self._log_pmf = self._build_log_pmf(decay, offset, left_decay)
        super().__init__(np.exp(self._log_pmf), {'decay': decay, 'offset': offset, 'left_decay': left_decay})

    def log_pmf(self) -> np.ndarray:
        return self._log_pmf

    @staticmethod
    def _build_log_pmf(decay: float, offset: int, left_decay: float) -> np.ndarray:
        log_r = math.log(decay)
        log_rl = math.log(left_decay) if left_decay > 0 else -np.inf
        log_norm = math.log(1.0 / (1.0 - decay) + left_decay / (1.0 - left_decay))

        # Right tail beyond offset + j has mass decay^(j+1) / ((1-decay) Z)
        right = max(0, math.ceil((math.log(PMF_TAIL_CUTOFF) + math.log(1.0 - decay) + log_norm) / log_r))
        support = np.arange(offset + right + 1, dtype=float)

        with np.errstate(invalid='ignore'):
            log_weights = np.where(support >= offset, (support - offset) * log_r, (offset - support) * log_rl)
        if offset > 0:
            # Folded left tail: sum of left_decay^j for j >= offset
            log_weights[0] = offset * log_rl - math.log(1.0 - left_decay) if left_decay > 0 else -np.inf
        else:
            log_weights[0] = -math.log(1.0 - left_decay)
        return log_weights - log_norm

def two_sided_geometric(p: float, generator: np.random.Generator, size: Optional[int] = None):
    """Integer noise with Pr[k] ∝ p^|k|, drawn as a difference of two geometrics."""
    if p <= 0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    if not p < 1:
        raise ValueError(f"Decay must be below 1, got {p}")
    noise = generator.geometric(1.0 - p, size) - generator.geometric(1.0 - p, size)
    return int(noise) if size is None else noise.astype(np.int64)

def sample(distribution: DummyCountDistribution, generator: np.random.Generator, size: Optional[int] = None):
    """Draw dummy counts."""
    return distribution.sample(generator, size)

@dataclass(frozen=True)
class PrivacyBudget:
    """(ε, δ) with an optional split fraction assigning split·ε to the first stage."""
    eps: float
    delta: float
    split: Optional[float] = None

    def __post_init__(self):
        if self.eps < 0 or not 0 <= self.delta <= 1:
            raise ValueError(f"Invalid budget eps={self.eps}, delta={self.delta}")
        if self.split is not None and not 0 < self.split < 1:
            raise ValueError(f"Split must lie in (0, 1), got {self.split}")

    def split_parts(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """((ε1, δ1), (ε2, δ2)) summing to (ε, δ)."""
        fraction = 0.5 if self.split is None else self.split
        eps1 = self.eps * fraction
        delta1 = self.delta * fraction
        return (eps1, delta1), (self.eps - eps1, self.delta - delta1)

def binary_mechanism_pmfs(distribution: DummyCountDistribution, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Output pmfs of βx + z for inputs 0 and 1, on the common support 0..cutoff+1."""
    if not 0 <= beta <= 1:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    p0 = np.append(distribution.pmf, 0.0)
    shifted = np.concatenate([[0.0], distribution.pmf])
    p1 = beta * shifted + (1.0 - beta) * p0
    return p0, p1

def _log_mechanism_pmfs(distribution: DummyCountDistribution, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    log_d = distribution.log_pmf()
    log_p0 = np.append(log_d, -np.inf)
    shifted = np.concatenate([[-np.inf], log_d])
    log_beta = math.log(beta) if beta > 0 else -np.inf
    log_keep = math.log1p(-beta) if beta < 1 else -np.inf
    log_p1 = np.logaddexp(log_beta + shifted, log_keep + log_p0)
    return log_p0, log_p1

def _hockey_stick(log_a: np.ndarray, log_b: np.ndarray, eps: float) -> float:
    """Σ_c max(0, a(c) - e^ε b(c)) from log-probabilities."""
    mask = np.isfinite(log_a) & (log_a > eps + log_b)
    if not mask.any():
        return 0.0
    excess = log_a[mask]
    gap = eps + log_b[mask] - excess
    # a - e^ε b = a (1 - e^(ε + log b - log a)); gap is -inf when b(c) = 0
    terms = np.exp(excess) * -np.expm1(gap)
    return float(terms.sum())

def certify_dp(distribution: DummyCountDistribution, beta: float, eps: float) -> float:
    """Tight δ(ε) of the binary input mechanism with dummy law `distribution`."""
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if beta == 0:
        return 0.0
    log_p0, log_p1 = _log_mechanism_pmfs(distribution, beta)
    return max(_hockey_stick(log_p0, log_p1, eps), _hockey_stick(log_p1, log_p0, eps))

def calibrate_offset(eps: float, delta: float, beta: float, max_offset: int = 1 << 24) -> AsymmetricGeometric:
    """Asymmetric geometric with decay e^(-ε) and the smallest offset certified at (ε, δ)."""
    if not 0 <= beta <= 1:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if delta >= 1:
        return AsymmetricGeometric(math.exp(-eps) if eps > 0 else 0.5, 0)
    if eps <= 0:
        raise CalibrationError(f"eps must be positive for a geometric dummy law (eps={eps}, delta={delta})")
    decay = math.exp(-eps)

    # One-sided decay already gives pure DP when sampling is weak enough
    if beta <= -math.expm1(-eps) + 1e-15:
        candidate = AsymmetricGeometric(decay, 0)
        if certify_dp(candidate, beta, eps) <= delta:
            return candidate

    if beta >= 1 and delta == 0:
        raise CalibrationError("beta=1 with delta=0 admits no dummy distribution")

    def certified(offset: int) -> bool:
        return certify_dp(AsymmetricGeometric(decay, offset, decay), beta, eps) <= delta

    # Doubling, then binary search for the smallest certified offset
    high = 1
    while not certified(high):
        high *= 2
        if high > max_offset:
            raise CalibrationError(f"No offset up to {max_offset} reaches delta={delta} at eps={eps}")
    low = 0 if not certified(0) else -1
    if low == -1:
        return AsymmetricGeometric(decay, 0, decay)
    while high - low > 1:
        middle = (low + high) // 2
        if certified(middle):
            high = middle
        else:
            low = middle

    result = AsymmetricGeometric(decay, high, decay)
    logger.info(f"Calibrated offset {high} (mean {result.mean:.2f}) for eps={eps}, delta={delta}, beta={beta}")
    return result

def calibrate_lnf(budget: PrivacyBudget, beta: float) -> AsymmetricGeometric:
    """Dummy law for LNF/CH: the mechanism runs at (ε/2, δ/2)."""
    return calibrate_offset(budget.eps / 2, budget.delta / 2, beta)

def calibrate_fme(budget: PrivacyBudget, beta: float) -> Tuple[AsymmetricGeometric, AsymmetricGeometric]:
    """D1 at (ε1/2, δ1/2) with β and D2 at (ε2/2, δ2/2) with β=1."""
    (eps1, delta1), (eps2, delta2) = budget.split_parts()
    first = calibrate_offset(eps1 / 2, delta1 / 2, beta)
    second = calibrate_offset(eps2 / 2, delta2 / 2, 1.0)
    return first, second

def distribution_from_config(kind: str, params: Dict[str, Any]) -> DummyCountDistribution:
    """Build a distribution from `dist.kind` and `dist.params`."""
    key = kind.strip().lower().replace('-', '_')
    if key == 'binomial':
        return BinomialDistribution(int(params['m']), float(params['p']))
    if key in ('point_mass', 'point'):
        return PointMass(int(params.get('k', 0)))
    if key in ('asymmetric_geometric', 'geometric'):
        return AsymmetricGeometric(float(params['decay']), int(params.get('offset', 0)),
                                   float(params.get('left_decay', 0.0)))
    raise ValueError(f"Unknown dummy distribution kind: {kind}")
