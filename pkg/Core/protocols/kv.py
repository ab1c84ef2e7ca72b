"""Key-value estimation over the filtering shuffle with padding-and-sampling."""

import logging
from typing import Optional, Tuple

import numpy as np

from Core.datasets import KVDataset
from Core.protocols.base import FakeUsers, ProtocolOutput, ShufflerRandomness
from Core.protocols.fme import FmeConfig, two_stage_shuffle
from Core.utils.constants import FilterLevel, ProtocolKind, STREAM_USER
from Core.utils.rng import Rng

logger = logging.getLogger(__name__)

def sample_pairs(dataset: KVDataset, kappa: int, generator: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Pad each user to κ pairs with dummy keys d+1..d+κ, pick one pair and discretize its value.

    Users holding more than κ pairs sample among all of them. Returns keys
    in [d+κ] and values in {-1, +1}.
    """
    held = dataset.pair_counts()
    padded = np.maximum(held, kappa)
    choice = np.floor(generator.random(dataset.n) * padded).astype(np.int64)
    real = choice < held
    index = dataset.offsets[:-1] + np.where(real, choice, 0)
    keys = np.where(real, dataset.keys[np.minimum(index, dataset.keys.size - 1)],
                    dataset.d + 1 + choice - held)
    values = np.where(real, dataset.values[np.minimum(index, dataset.values.size - 1)], 0.0)
    plus = generator.random(dataset.n) < (1.0 + values) / 2.0
    return keys.astype(np.int64), np.where(plus, 1, -1)

def pair_symbols(keys: np.ndarray, values: np.ndarray, key_domain: int) -> np.ndarray:
    """s = k + (v+1)/2 · (d+κ), so ⟨k,-1⟩ → k and ⟨k,+1⟩ → k + d + κ."""
    return np.asarray(keys, dtype=np.int64) + (np.asarray(values, dtype=np.int64) + 1) // 2 * key_domain

def kv_run(dataset: KVDataset, config: FmeConfig, kappa: int, hash_fn, rng: Rng,
           fake: Optional[FakeUsers] = None, randomness: Optional[ShufflerRandomness] = None,
           filter_level: FilterLevel = FilterLevel.KEY) -> ProtocolOutput:
    """Estimate key frequencies Φ̂ and mean values Ψ̂ for the selected keys.

    With key-level filtering `hash_fn` maps the padded key space [d+κ];
    with pair-level filtering it maps pair symbols [2(d+κ)].
    """
    if kappa < 1:
        raise ValueError(f"Padding length must be at least 1, got {kappa}")
    d = dataset.d
    key_domain = d + kappa
    symbol_domain = 2 * key_domain
    by_key = filter_level is FilterLevel.KEY
    hash_domain = key_domain if by_key else symbol_domain
    if hash_fn.d < hash_domain:
        raise ValueError(f"Hash domain {hash_fn.d} is smaller than the {'key' if by_key else 'pair'} "
                         f"space {hash_domain}")
    config.validate(hash_domain, hash_fn)

    keys, values = sample_pairs(dataset, kappa, rng.stream(STREAM_USER))
    payloads = pair_symbols(keys, values, key_domain)
    hashes = hash_fn.hash_many(keys if by_key else payloads)
    if fake is not None and len(fake):
        fake_payloads = np.asarray(fake.payloads, dtype=np.int64)
        fake_keys = (fake_payloads - 1) % key_domain + 1
        claimed = fake.hashes if fake.hashes is not None else hash_fn.hash_many(fake_keys if by_key else fake_payloads)
        payloads = np.concatenate([payloads, fake_payloads])
        hashes = np.concatenate([hashes, np.asarray(claimed, dtype=np.int64)])

    if by_key:
        restrict = lambda units: units[units <= d]
        expand = lambda selected: np.column_stack((selected + key_domain, selected)).ravel()
    else:
        restrict = lambda units: units[(units - 1) % key_domain < d]
        expand = None

    run = two_stage_shuffle(payloads, hashes, symbol_domain, config, hash_fn, rng, randomness,
                            restrict=restrict, expand=expand)
    units = run.filter_result.items
    mu2 = config.d2.mean
    if by_key:
        reported = units
        plus_selected = minus_selected = np.ones(units.size, dtype=bool)
    else:
        reported = np.unique((units - 1) % key_domain + 1)
        plus_selected = np.isin(reported + key_domain, units)
        minus_selected = np.isin(reported, units)

    # Unselected pairs contribute nothing once debiased
    c_plus = np.where(plus_selected, run.counts[reported + key_domain - 1] - mu2, 0.0)
    c_minus = np.where(minus_selected, run.counts[reported - 1] - mu2, 0.0)

    n_total = payloads.size
    scale = kappa / (n_total * config.beta)
    phi = scale * (c_plus + c_minus)
    degenerate = phi <= 0
    psi = np.zeros(reported.size)
    positive = ~degenerate
    psi[positive] = scale * (c_plus[positive] - c_minus[positive]) / phi[positive]
    if degenerate.any():
        logger.warning(f"{int(degenerate.sum())} selected keys have Φ̂ <= 0; reporting Ψ̂ = 0 for them")

    return ProtocolOutput(ProtocolKind.KV, d, phi, items=reported, psi=psi, degenerate=degenerate,
                          filter_result=run.filter_result, transcript=run.transcript, n_total=n_total,
                          counts=run.counts)
