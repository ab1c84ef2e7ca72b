"""Collusion and data poisoning against the shuffle protocols."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from Core.analysis import (PredictorInput, amplify, ch_gain_fixed_hash, empirical_eta, gains_categorical,
                           gains_kv, local_epsilon_for_target)
from Core.datasets import CategoricalDataset, KVDataset, true_frequencies, true_kv_statistics
from Core.hashing import sample_hash
from Core.protocols.base import FakeUsers, ProtocolOutput, ShufflerRandomness
from Core.protocols.filtering import filter_items
from Core.protocols.fme import FmeConfig
from Core.protocols.kv import pair_symbols
from Core.protocols.runner import ProtocolSetup
from Core.transport import COLLECTOR, SHUFFLER, USERS, ItemSetMessage, Network
from Core.trials import run_trials
from Core.utils.constants import (BOTTOM, DEFAULT_COLLISION_ATTEMPTS, FilterLevel, ProtocolKind, STREAM_ATTACK,
                                  STREAM_COLLECTOR, STREAM_SEARCH, STREAM_SHUFFLER)
from Core.utils.helpers import mean_and_stderr
from Core.utils.rng import Rng

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class CollusionScenario:
    """|Ω| users collude with the collector against the others.

    `eps0` is the local budget of the pure-shuffle baseline; when omitted
    it is the one that reaches (eps, delta) with all n users honest.
    """
    n: int
    colluders: int
    eps: float
    delta: float
    eps0: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.colluders < self.n:
            raise ValueError(f"Colluders must number in [0, n), got {self.colluders} of {self.n}")

    def local_epsilon(self) -> float:
        if self.eps0 is not None:
            return self.eps0
        return local_epsilon_for_target(self.eps, self.n, self.delta)

@dataclass(frozen=True)
class PoisoningScenario:
    """n' fake users promoting target items (or keys) T."""
    targets: Tuple[int, ...]
    n_fake: int

    def __post_init__(self):
        if len(self.targets) < 1:
            raise ValueError("A poisoning scenario needs at least one target")
        if self.n_fake < 0:
            raise ValueError(f"Fake user count must be nonnegative, got {self.n_fake}")

    @classmethod
    def from_lambda(cls, targets: Sequence[int], lam: float, n: int) -> "PoisoningScenario":
        """Scenario with n' = round(λn/(1−λ)) fake users."""
        if not 0 <= lam < 1:
            raise ValueError(f"lambda must lie in [0, 1), got {lam}")
        return cls(tuple(int(t) for t in targets), int(round(lam * n / (1.0 - lam))))

    def lam(self, n: int) -> float:
        """λ = n'/(n+n')."""
        return self.n_fake / (n + self.n_fake)

@dataclass
class GainResult:
    """Measured and analytic gain of one attack configuration."""
    protocol: ProtocolKind
    quantity: str
    lam: float
    n_targets: int
    empirical: float
    stderr: float
    analytic: float
    trials: int
    fixed_hash: Optional[float] = None
    collision_rate: Optional[float] = None

def actual_epsilon(kind: ProtocolKind, scenario: CollusionScenario) -> float:
    """Budget the honest users actually get once |Ω| users collude."""
    if kind is ProtocolKind.PURE_GRR:
        return amplify(scenario.local_epsilon(), scenario.n - scenario.colluders, scenario.delta)
    # Dummies are added by the shuffler, so colluding users remove no noise
    return scenario.eps

def choose_ch_hash(targets: Sequence[int], hash_fn, variant: str = "colliding") -> int:
    """Hash value the CH attacker sends: the first target's.

    Under a hash found by `find_colliding_hash` this value is shared by
    every target.
    """
    if variant not in ("colliding", "single"):
        raise ValueError(f"Unknown CH attack variant: {variant}")
    return int(hash_fn.hash(int(targets[0])))

def targets_collide(targets: Sequence[int], hash_fn) -> bool:
    values = hash_fn.hash_many(np.asarray(targets))
    return bool(np.all(values == values[0]))

def find_colliding_hash(setup: ProtocolSetup, targets: Sequence[int], d: int, rng: Rng,
                        attempts: int = DEFAULT_COLLISION_ATTEMPTS):
    """Search for a collector hash that maps every target to one value.

    Redraws from the setup's hash family at most `attempts` times and
    returns (hash, draws used), or None when the budget runs out. A setup
    with a fixed hash is only checked, never redrawn.
    """
    if setup.hash_fn is not None:
        return (setup.hash_fn, 1) if targets_collide(targets, setup.hash_fn) else None
    generator = rng.stream(STREAM_SEARCH)
    for attempt in range(1, attempts + 1):
        hash_fn = sample_hash(setup.hash_domain(d), setup.hash_range(), generator)
        if targets_collide(targets, hash_fn):
            return hash_fn, attempt
    return None

def craft_fake_users(kind: ProtocolKind, scenario: PoisoningScenario, d: int, rng: Rng, hash_fn=None,
                     kappa: int = 1, variant: str = "colliding",
                     filter_level: FilterLevel = FilterLevel.KEY) -> FakeUsers:
    """Gain-optimal fake messages for the protocol.

    Categorical protocols cycle through the targets; the key-value attack
    picks a uniformly random target per fake user and sends ⟨target, +1⟩.
    """
    count = scenario.n_fake
    targets = np.asarray(scenario.targets, dtype=np.int64)
    if kind is ProtocolKind.CH:
        crafted = choose_ch_hash(targets, hash_fn, variant)
        return FakeUsers(np.full(count, crafted, dtype=np.int64))
    if kind is ProtocolKind.KV:
        chosen = targets[rng.stream(STREAM_ATTACK).integers(0, targets.size, size=count)]
        payloads = pair_symbols(chosen, np.ones(count, dtype=np.int64), d + kappa)
        claimed = hash_fn.hash_many(chosen if filter_level is FilterLevel.KEY else payloads)
        return FakeUsers(payloads, claimed)
    if kind in (ProtocolKind.GH, ProtocolKind.UH):
        raise ValueError("Poisoning of the grouped-hash variants is not supported")

    items = targets[np.arange(count) % targets.size]
    claimed = hash_fn.hash_many(items) if hash_fn is not None else None
    return FakeUsers(items, claimed)

def _target_sum(output: ProtocolOutput, targets: np.ndarray) -> float:
    return float(output.dense()[targets - 1].sum())

def _categorical_trial(setup: ProtocolSetup, dataset: CategoricalDataset, scenario: PoisoningScenario,
                       seed: int, index: int, variant: str, attempts: int) -> Dict[str, Any]:
    targets = np.asarray(scenario.targets, dtype=np.int64)
    found = None
    if setup.kind is ProtocolKind.CH and variant == "colliding" and targets.size > 1:
        found = find_colliding_hash(setup, targets, dataset.d, Rng(seed).child(index), attempts)
    hash_fn = found[0] if found else setup.draw_hash(dataset.d, Rng(seed).child(index))
    fixed = setup.with_hash(hash_fn) if hash_fn is not None else setup
    fake = craft_fake_users(setup.kind, scenario, dataset.d, Rng(seed).child(index), hash_fn, variant=variant)

    clean = fixed.run(dataset, Rng(seed).child(index))
    poisoned = fixed.run(dataset, Rng(seed).child(index), fake)
    result = {'gain': _target_sum(poisoned, targets) - _target_sum(clean, targets),
              'selected': clean.selected.copy()}
    if setup.kind is ProtocolKind.CH:
        result['colliding'] = targets_collide(targets, hash_fn)
        result['fixed_hash'] = ch_gain_fixed_hash(scenario.lam(dataset.n), true_frequencies(dataset).entries,
                                                  targets, hash_fn, choose_ch_hash(targets, hash_fn, variant))
    return result

def mga_categorical(setup: ProtocolSetup, dataset: CategoricalDataset, scenario: PoisoningScenario,
                    trials: int, seed: int = 0, variant: str = "colliding", workers: int = 1,
                    attempts: int = DEFAULT_COLLISION_ATTEMPTS) -> GainResult:
    """Maximal gain attack: mean Σ_{i∈T}(f̂'_i − f̂_i) over paired clean/poisoned runs.

    Against CH the analytic gain is λ(|T| − f_T) for trials whose hash
    maps every target to the crafted value and λ(1 − f_T) for the others,
    weighted by how often the hash search succeeded.
    """
    args = [(setup, dataset, scenario, seed, t, variant, attempts) for t in range(trials)]
    results = run_trials(_categorical_trial, args, workers)
    mean, stderr = mean_and_stderr(r['gain'] for r in results)

    lam = scenario.lam(dataset.n)
    f = true_frequencies(dataset).entries
    fixed_hash = collision_rate = None
    if setup.kind is ProtocolKind.CH:
        collision_rate = float(np.mean([r['colliding'] for r in results])) if results else 0.0
        fixed_hash = float(np.mean([r['fixed_hash'] for r in results])) if results else 0.0
        analytic = (collision_rate * gains_categorical(lam, f, scenario.targets, ProtocolKind.CH)
                    + (1.0 - collision_rate) * gains_categorical(lam, f, scenario.targets, ProtocolKind.LNF))
        if collision_rate < 1.0 and variant == "colliding":
            logger.warning(f"Colliding hash found in {collision_rate:.0%} of trials; "
                           f"the rest fall back to a single target")
    else:
        eta = empirical_eta([r['selected'] for r in results], dataset.d)[np.asarray(scenario.targets) - 1]
        analytic = gains_categorical(lam, f, scenario.targets, setup.kind, eta, eps0=setup.eps0)
    logger.info(f"MGA on {setup.get_name()}: gain {mean:.4f} ± {stderr:.4f} (analytic {analytic:.4f})")
    return GainResult(setup.kind, 'f', lam, len(scenario.targets), mean, stderr, analytic, trials,
                      fixed_hash, collision_rate)

def _kv_trial(setup: ProtocolSetup, dataset: KVDataset, scenario: PoisoningScenario,
              seed: int, index: int) -> Dict[str, Any]:
    targets = np.asarray(scenario.targets, dtype=np.int64)
    hash_fn = setup.draw_hash(dataset.d, Rng(seed).child(index))
    fixed = setup.with_hash(hash_fn)
    fake = craft_fake_users(ProtocolKind.KV, scenario, dataset.d, Rng(seed).child(index), hash_fn,
                            kappa=setup.kappa, filter_level=setup.filter_level)

    clean = fixed.run(dataset, Rng(seed).child(index))
    phi, psi = clean.dense_kv()
    phi_p, psi_p = fixed.run(dataset, Rng(seed).child(index), fake).dense_kv()
    return {'phi': float(phi_p[targets - 1].sum() - phi[targets - 1].sum()),
            'psi': float(psi_p[targets - 1].sum() - psi[targets - 1].sum()),
            'selected': clean.selected.copy()}

def m2ga_kv(setup: ProtocolSetup, dataset: KVDataset, scenario: PoisoningScenario, trials: int,
            seed: int = 0, workers: int = 1) -> Tuple[GainResult, GainResult]:
    """Maximal gain attack on key-value data: gains of Φ̂ and Ψ̂ over the targets."""
    args = [(setup, dataset, scenario, seed, t) for t in range(trials)]
    results = run_trials(_kv_trial, args, workers)
    lam = scenario.lam(dataset.n)
    truth = true_kv_statistics(dataset)
    targets = np.asarray(scenario.targets)
    eta = empirical_eta([r['selected'] for r in results], dataset.d)[targets - 1]
    inp = PredictorInput(n=dataset.n, d=dataset.d, kappa=setup.kappa, phi=truth.phi, psi=truth.psi, lam=lam,
                         targets=list(scenario.targets), eta=eta, kv_dataset=dataset)
    analytic_phi, analytic_psi = gains_kv(inp)

    phi_mean, phi_se = mean_and_stderr(r['phi'] for r in results)
    psi_mean, psi_se = mean_and_stderr(r['psi'] for r in results)
    size = len(scenario.targets)
    return (GainResult(ProtocolKind.KV, 'phi', lam, size, phi_mean, phi_se, analytic_phi, trials),
            GainResult(ProtocolKind.KV, 'psi', lam, size, psi_mean, psi_se, analytic_psi, trials))

def two_round_oracle_run(dataset: CategoricalDataset, config: FmeConfig, hash_fn, rng: Rng,
                         randomness: Optional[ShufflerRandomness] = None) -> ProtocolOutput:
    """Filtering with a second user round instead of layered encryption.

    Users first send E[h(x)]; after the collector filters, it tells the
    users Λ and every user sends E[x] (or E[⊥] if x ∉ Λ) a second time.
    Draws the same shuffler randomness as fme_run, so with equal seeds both
    produce the same estimates. Test oracle only.
    """
    config.validate(dataset.d, hash_fn)
    suite = config.suite
    randomness = randomness or ShufflerRandomness(rng.stream(STREAM_SHUFFLER))
    collector = suite.keygen(config.security_bits, rng.stream(STREAM_COLLECTOR))
    suite.keygen(config.security_bits, rng.stream(STREAM_SHUFFLER))
    pk_d = collector.public
    b = config.b
    values = dataset.values

    network = Network(dataset.n, config.keep_hop_log)
    with network.stage("users-hash"):
        network.send_from_users(SHUFFLER, suite.encrypt_batch(hash_fn.hash_many(values), [pk_d]))

    with network.stage("shuffler-first"):
        incoming = network.receive(SHUFFLER)
        keep = randomness.keep_mask(len(incoming), config.beta)
        z1 = randomness.dummy_counts(config.d1, b, "first")
        pool = incoming.take(np.flatnonzero(keep)).concat(
            suite.encrypt_batch(np.repeat(np.arange(1, b + 1), z1), [pk_d]))
        network.send(SHUFFLER, COLLECTOR, pool.take(randomness.permutation(len(pool), "first")))

    with network.stage("collector-filter"):
        hash_values = suite.decrypt_batch(network.receive(COLLECTOR), collector.secret)
        result = filter_items(np.bincount(hash_values, minlength=b + 1)[1:], config.alpha, config.d1,
                              config.l, hash_fn)
        network.send(COLLECTOR, USERS, ItemSetMessage(result.items, dataset.d, suite.size_model()[0]))

    with network.stage("users-data"):
        reports = np.where(np.isin(values, result.items), values, BOTTOM)
        network.send_from_users(SHUFFLER, suite.encrypt_batch(reports, [pk_d]))

    with network.stage("shuffler-second"):
        second = network.receive(SHUFFLER).take(np.flatnonzero(keep))
        z2 = randomness.dummy_counts(config.d2, result.items.size, "second")
        pool = second.concat(suite.encrypt_batch(np.repeat(result.items, z2), [pk_d]))
        network.send(SHUFFLER, COLLECTOR, pool.take(randomness.permutation(len(pool), "second")))

    with network.stage("collector-estimate"):
        symbols = suite.decrypt_batch(network.receive(COLLECTOR), collector.secret)
        counts = np.bincount(symbols, minlength=dataset.d + 1)[1:]

    transcript = network.close()
    estimates = (counts[result.items - 1] - config.d2.mean) / (dataset.n * config.beta)
    return ProtocolOutput(ProtocolKind.FME, dataset.d, estimates, items=result.items, filter_result=result,
                          transcript=transcript, n_total=dataset.n, counts=counts)

def gain_report_rows(results: Sequence[GainResult], eps: float) -> List[Dict[str, Any]]:
    """Rows for the attack CSV."""
    return [{
        'protocol': r.protocol.name.lower(),
        'quantity': r.quantity,
        'eps': eps,
        'lambda': r.lam,
        'targets': r.n_targets,
        'analytic_gain': r.analytic,
        'empirical_gain': r.empirical,
        'stderr': r.stderr,
        'trials': r.trials,
        'fixed_hash_gain': r.fixed_hash,
        'collision_rate': r.collision_rate,
    } for r in results]
