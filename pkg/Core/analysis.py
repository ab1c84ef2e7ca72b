"""Closed-form predictors for accuracy, communication, robustness and amplification.

Every predictor here has a simulated counterpart: the protocols produce
measured quantities and these functions produce the values they are
compared against. All functions are pure.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from Core.datasets import KVDataset, KVStatistics
from Core.utils.constants import (DEFAULT_ALPHA, DEFAULT_L_FLOOR, DEFAULT_TAU, ProtocolKind, Regime)
from Core.utils.helpers import relative_error, top_k_indices

logger = logging.getLogger(__name__)

@dataclass
class PredictorInput:
    """Parameters shared by the predictors.

    `lam` is the fake-user share n'/(n+n'). `eta` holds non-selection
    probabilities per target (aligned with `targets`). `kv_dataset`, when
    given, enables the general key-value gain formulas.
    """
    n: int
    d: int
    b: int = 2
    l: Optional[int] = None
    beta: float = 1.0
    alpha: float = DEFAULT_ALPHA
    kappa: int = 1
    mu1: float = 0.0
    var1: float = 0.0
    mu2: float = 0.0
    var2: float = 0.0
    tau: Tuple[int, int, int] = DEFAULT_TAU
    f: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None
    lam: float = 0.0
    targets: Sequence[int] = field(default_factory=list)
    eta: Optional[np.ndarray] = None
    kv_dataset: Optional[KVDataset] = None

    def __post_init__(self):
        if not 0 <= self.beta <= 1 or not 0 <= self.alpha <= 1 or not 0 <= self.lam < 1:
            raise ValueError("beta, alpha must lie in [0, 1] and lam in [0, 1)")
        if self.l is None:
            self.l = self.b

    @property
    def n_fake(self) -> float:
        """n' implied by λ."""
        return self.lam * self.n / (1.0 - self.lam)

    def target_eta(self) -> np.ndarray:
        if self.eta is None:
            return np.zeros(len(self.targets))
        return np.asarray(self.eta, dtype=float)

# Privacy amplification by shuffling

def amplification_cap(n: float, delta: float) -> float:
    """Largest ε0 for which the amplification bound applies (−inf if none)."""
    inner = n / (8.0 * math.log(2.0 / delta)) - 1.0
    return math.log(inner) if inner > 0 else -math.inf

def amplify(eps0: float, n: float, delta: float) -> float:
    """Central ε of n shuffled ε0-LDP reports; ε0 itself above the cap."""
    if n < 1 or not 0 < delta <= 1:
        raise ValueError(f"Need n >= 1 and delta in (0, 1], got n={n}, delta={delta}")
    if eps0 > amplification_cap(n, delta):
        return eps0
    spread = (math.exp(eps0) - 1.0) * 4.0 * math.sqrt(2.0 * math.log(4.0 / delta))
    return math.log(1.0 + spread / math.sqrt((math.exp(eps0) + 1.0) * n) + 4.0 / n)

def local_epsilon_for_target(eps: float, n: float, delta: float) -> float:
    """Largest ε0 whose amplified budget does not exceed `eps`."""
    cap = amplification_cap(n, delta)
    if cap <= 0 or amplify(0.0, n, delta) > eps:
        raise ValueError(f"No local budget reaches eps={eps} with n={n}, delta={delta}")
    if amplify(cap, n, delta) <= eps:
        return cap
    return optimize.brentq(lambda e0: amplify(e0, n, delta) - eps, 0.0, cap, xtol=1e-12)

# Accuracy

def lnf_error(f_i: float, n: int, beta: float, var: float) -> float:
    """Expected squared error of LNF: f_i(1−β)/(nβ) + σ²/(n²β²)."""
    return f_i * (1.0 - beta) / (n * beta) + var / (n * n * beta * beta)

def _collision_term(f: np.ndarray, i: int, n: int, beta: float, b: int) -> float:
    others = np.delete(np.asarray(f, dtype=float), i - 1)
    sampled = n * others * beta * (1.0 - beta)
    return float(np.sum((n * n * others ** 2 * beta * beta + sampled) * (b - 1) / b ** 2 + sampled / b ** 2))

def ch_error(f: np.ndarray, i: int, n: int, beta: float, b: int, var: float) -> float:
    """Expected squared error of CH for item i, including the hash collision term ω."""
    if b < 2:
        raise ValueError("CH error is undefined for b = 1")
    f_i = float(f[i - 1])
    omega = _collision_term(f, i, n, beta, b)
    scale = b * b / (n * n * beta * beta * (b - 1) ** 2)
    return scale * (n * f_i * beta * (1.0 - beta) + var + omega)

def gh_error(f: np.ndarray, i: int, n: int, beta: float, b: int, var: float, groups: int) -> float:
    """CH error with g groups, each contributing its own dummy variance."""
    return ch_error(f, i, n, beta, b, groups * var)

def fme_variance(f_i: float, n: int, beta: float, var2: float) -> float:
    """V[f̂_i | Λ] of FME."""
    return lnf_error(f_i, n, beta, var2)

def fme_error(f_i: float, n: int, beta: float, var2: float, eta_i: float) -> float:
    """E[(f̂_i − f_i)²] = (1−η)V + η f_i²."""
    return (1.0 - eta_i) * fme_variance(f_i, n, beta, var2) + eta_i * f_i * f_i

def eta_bound(f_i: float, n: int, beta: float, c_th: float) -> float:
    """Chernoff bound exp(−ζ² n f_i β / 2) on non-selection, with c_th = (1−ζ) n f_i β."""
    mean = n * f_i * beta
    if mean <= 0:
        return 1.0
    zeta = min(max(1.0 - c_th / mean, 0.0), 1.0)
    return math.exp(-zeta * zeta * mean / 2.0)

def grr_variance(f_i: float, n: int, eps0: float, d: int) -> float:
    """Variance of the debiased shuffled-GRR estimate."""
    p = math.exp(eps0) / (math.exp(eps0) + d - 1)
    q = (1.0 - p) / (d - 1)
    return (f_i * p * (1.0 - p) + (1.0 - f_i) * q * (1.0 - q)) / (n * (p - q) ** 2)

def kv_accuracy(inp: PredictorInput, key: int, eta_i: float = 0.0) -> Dict[str, float]:
    """Conditional mean and variance of Φ̂ and Ψ̂ for one key plus both expected losses.

    The Ψ̂ moments come from first-order Taylor expansions and are
    approximations.
    """
    phi_i = float(inp.phi[key - 1])
    psi_i = float(inp.psi[key - 1])
    n, beta, kappa = inp.n, inp.beta, inp.kappa
    var_phi = phi_i * (kappa - beta) / (n * beta) + 2.0 * kappa ** 2 * inp.var2 / (n * n * beta * beta)
    q = beta * (1.0 + psi_i) / (2.0 * kappa)
    r = beta * (1.0 - psi_i) / (2.0 * kappa)
    ratio = beta / kappa
    var_psi = kappa ** 2 / (n * beta ** 2) * (2.0 * (q - q * q + r - r * r) - ratio * (1.0 - ratio))
    return {
        'phi_mean': phi_i,
        'phi_variance': var_phi,
        'psi_mean': psi_i,
        'psi_variance_bound': var_psi,
        'phi_loss': (1.0 - eta_i) * var_phi + eta_i * phi_i ** 2,
        'psi_loss': (1.0 - eta_i) * var_psi + eta_i * (1.0 - psi_i) ** 2,
    }

def hypothesis_error_bound(eps: float, delta: float) -> float:
    """Equal-error point p* = (1−δ)/(1+e^ε) of any test against (ε, δ)-DP."""
    if eps < 0 or not 0 <= delta <= 1:
        raise ValueError(f"Invalid budget eps={eps}, delta={delta}")
    return (1.0 - delta) / (1.0 + math.exp(eps))

# Communication

def lnf_comm_cost(tau: float, n: int, beta: float, mu: float, d: int) -> float:
    """C_tot of LNF: τ((1+β)n + μd)."""
    return tau * ((1.0 + beta) * n + mu * d)

def ch_comm_cost(tau: float, n: int, beta: float, mu: float, b: int) -> float:
    """C_tot of CH: τ((1+β)n + μb)."""
    return tau * ((1.0 + beta) * n + mu * b)

def expected_selected_bound(inp: PredictorInput) -> float:
    """Upper bound on E|Λ|."""
    sampled = inp.beta * inp.n
    if sampled <= inp.l <= inp.b:
        return (sampled + inp.alpha * (inp.l - sampled)) * inp.d / inp.b
    return inp.l * inp.d / inp.b

def fme_comm_bound(inp: PredictorInput) -> Dict[str, float]:
    """C_US exactly, and upper bounds on C_SD, E|Λ| and C_tot, in bits."""
    tau1, tau2, tau3 = inp.tau
    selected = expected_selected_bound(inp)
    c_us = (tau1 + tau3) * inp.n
    c_sd = (2 * tau1 + tau2 + tau3) * (inp.beta * inp.n + inp.mu1 * inp.b) + tau1 * (inp.mu2 + 1.0) * selected
    return {'c_us': c_us, 'c_sd_bound': c_sd, 'lambda_bound': selected, 'c_tot_bound': c_us + c_sd}

def optimal_b(inp: PredictorInput, regime: Regime = Regime.L_EQUALS_B) -> float:
    """Hash range minimizing the C_tot bound."""
    tau1, tau2, tau3 = inp.tau
    if inp.mu1 <= 0:
        raise ValueError("Optimal b needs a positive first-stage dummy mean")
    denominator = (2 * tau1 + tau2 + tau3) * inp.mu1
    if regime is Regime.L_EQUALS_B:
        numerator = tau1 * (inp.mu2 + 1.0) * inp.beta * (1.0 - inp.alpha) * inp.n * inp.d
    else:
        numerator = tau1 * (inp.mu2 + 1.0) * inp.l * inp.d
    return math.sqrt(numerator / denominator)

def l_policy(n: int, d: int, floor: int = DEFAULT_L_FLOOR) -> int:
    """l = max{n²/d, c}."""
    return int(max(math.ceil(n * n / d), floor))

# Robustness

def gains_categorical(lam: float, f: np.ndarray, targets: Sequence[int], protocol: ProtocolKind,
                      eta: Optional[np.ndarray] = None, eps0: Optional[float] = None) -> float:
    """Maximal overall gain G_f^max of an MGA against a categorical protocol.

    For the pure GRR baseline fake users skip randomization, so the gain is
    scaled by the debiasing factor 1/(p−q); this needs `eps0`.
    """
    f = np.asarray(f, dtype=float)
    f_targets = f[np.asarray(targets) - 1]
    f_total = float(f_targets.sum())
    if protocol in (ProtocolKind.CH, ProtocolKind.GH, ProtocolKind.UH):
        return lam * (len(targets) - f_total)
    if protocol is ProtocolKind.PURE_GRR:
        if eps0 is None:
            raise ValueError("The GRR gain needs the local budget eps0")
        d = f.size
        p = math.exp(eps0) / (math.exp(eps0) + d - 1)
        q = (1.0 - p) / (d - 1)
        reported = p * f_total + q * (len(targets) - f_total)
        return lam * (1.0 - reported) / (p - q)
    gain = lam * (1.0 - f_total)
    if protocol in (ProtocolKind.FME, ProtocolKind.PROPOSAL_STAR) and eta is not None:
        gain += float(np.dot(np.asarray(eta, dtype=float), f_targets))
    return gain

def ch_gain_fixed_hash(lam: float, f: np.ndarray, targets: Sequence[int], hash_fn, crafted: int) -> float:
    """Expected gain when every fake user sends the hash value `crafted`.

    Targets hashing to `crafted` gain b/(b−1)·λ(1 − F_v); the others lose
    b/(b−1)·λ F_h(i), where F_v is the total frequency hashing to v.
    """
    f = np.asarray(f, dtype=float)
    b = hash_fn.b
    mass = np.bincount(hash_fn.hash_many(np.arange(1, f.size + 1)), weights=f, minlength=b + 1)
    target_hashes = hash_fn.hash_many(np.asarray(targets))
    hits = (target_hashes == crafted).astype(float)
    return float(np.sum(b / (b - 1.0) * lam * (hits - mass[target_hashes])))

def ch_gain_colliding(lam: float, n_targets: int, b: int, bucket_mass: float) -> float:
    """|T|·b/(b−1)·λ(1 − F_v) when all targets share the crafted hash value v."""
    return n_targets * b / (b - 1.0) * lam * (1.0 - bucket_mass)

def _kv_general_sums(dataset: KVDataset, kappa: int, key: int) -> Tuple[float, float]:
    xi = np.maximum(dataset.pair_counts(), kappa).astype(float)
    holders = dataset.keys == key
    weights = 1.0 / xi[dataset.users[holders]]
    return float(weights.sum()), float(np.dot(weights, dataset.values[holders]))

def gains_kv(inp: PredictorInput) -> Tuple[float, float]:
    """(G_Φ^max, G_Ψ^max) of an M2GA against the KV protocol.

    Uses the general per-holder form when `kv_dataset` is set, otherwise the
    form that assumes every user holds at most κ pairs. G_Ψ^max is a
    first-order approximation.
    """
    targets = np.asarray(inp.targets, dtype=np.int64)
    eta = inp.target_eta()
    phi_t = np.asarray(inp.phi, dtype=float)[targets - 1]
    psi_t = np.asarray(inp.psi, dtype=float)[targets - 1]
    excess = float(np.dot(eta, phi_t))
    kappa, lam, size = inp.kappa, inp.lam, targets.size

    if inp.kv_dataset is None:
        gain_phi = lam * (kappa - phi_t.sum()) + excess
        share = (1.0 - lam) * phi_t * size
        gain_psi = float(np.sum((share * psi_t + lam * kappa) / (share + lam * kappa)) - psi_t.sum())
        return float(gain_phi), gain_psi

    n_fake = inp.n_fake
    sums = [_kv_general_sums(inp.kv_dataset, kappa, int(key)) for key in targets]
    weight_total = sum(s[0] for s in sums)
    gain_phi = kappa / (inp.n + n_fake) * (weight_total + n_fake) - phi_t.sum() + excess
    per_target = n_fake / size
    gain_psi = sum((value + per_target) / (weight + per_target) if weight + per_target > 0 else 0.0
                   for weight, value in sums) - psi_t.sum()
    return float(gain_phi), float(gain_psi)

# Metrics

def mse_topk(truth: np.ndarray, estimate: np.ndarray, k: int) -> float:
    """MSE over the k items with the largest true frequency."""
    truth = np.asarray(truth, dtype=float)
    if not 1 <= k <= truth.size:
        raise ValueError(f"k must lie in [1, {truth.size}], got {k}")
    top = top_k_indices(truth, k)
    return float(np.mean((np.asarray(estimate, dtype=float)[top] - truth[top]) ** 2))

def mse_topk_kv(truth: KVStatistics, phi_hat: np.ndarray, psi_hat: np.ndarray, k: int,
                clip: bool = False) -> Tuple[float, float]:
    """(MSE of Φ̂, MSE of Ψ̂) over the k keys with the largest true Φ."""
    if clip:
        phi_hat = np.clip(phi_hat, 0.0, 1.0)
    top = top_k_indices(np.asarray(truth.phi), k)
    return (float(np.mean((np.asarray(phi_hat)[top] - truth.phi[top]) ** 2)),
            float(np.mean((np.asarray(psi_hat)[top] - truth.psi[top]) ** 2)))

def empirical_eta(selected_sets: Sequence[np.ndarray], d: int) -> np.ndarray:
    """Fraction of runs in which each item was not selected."""
    if not selected_sets:
        return np.ones(d)
    hits = np.zeros(d)
    for selected in selected_sets:
        hits[np.asarray(selected, dtype=np.int64) - 1] += 1
    return 1.0 - hits / len(selected_sets)

def predictor_rows(predicted: Dict[str, float], measured: Dict[str, float]) -> List[Dict[str, Any]]:
    """Rows (quantity, predicted, measured, rel_error) for quantities present in both."""
    rows = []
    for quantity in sorted(set(predicted) & set(measured)):
        rows.append({
            'quantity': quantity,
            'predicted': float(predicted[quantity]),
            'measured': float(measured[quantity]),
            'rel_error': relative_error(float(predicted[quantity]), float(measured[quantity])),
        })
    return rows
