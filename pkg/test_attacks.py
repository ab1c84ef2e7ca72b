#!/usr/bin/env python3
"""
Tests for collusion budgets and data poisoning gains.
"""

import numpy as np
import pytest

from Core.analysis import amplify, ch_gain_fixed_hash
from Core.attacks import (CollusionScenario, PoisoningScenario, actual_epsilon, choose_ch_hash, craft_fake_users,
                          find_colliding_hash, gain_report_rows, m2ga_kv, mga_categorical, targets_collide)
from Core.datasets import synth_kv, synth_zipf, true_frequencies
from Core.dummy import BinomialDistribution, PrivacyBudget
from Core.hashing import TableHash
from Core.protocols import FmeConfig, ProtocolSetup
from Core.utils.constants import FilterLevel, ProtocolKind
from Core.utils.rng import Rng

def _close(result, slack=0.0):
    return abs(result.empirical - result.analytic) <= 3 * result.stderr + slack + 1e-9

def test_augmented_protocols_keep_the_target_budget():
    for share in (0.0, 0.5, 0.9):
        scenario = CollusionScenario(n=10 ** 6, colluders=int(share * 10 ** 6), eps=1.0, delta=1e-12)
        for kind in (ProtocolKind.LNF, ProtocolKind.FME, ProtocolKind.KV):
            assert actual_epsilon(kind, scenario) == 1.0

def test_pure_shuffle_budget_degrades_with_colluders():
    honest = CollusionScenario(n=10 ** 6, colluders=0, eps=1.0, delta=1e-12, eps0=8.3)
    assert actual_epsilon(ProtocolKind.PURE_GRR, honest) == pytest.approx(1.1, abs=0.1)
    colluding = CollusionScenario(n=10 ** 6, colluders=10 ** 5, eps=1.0, delta=1e-12, eps0=8.3)
    assert actual_epsilon(ProtocolKind.PURE_GRR, colluding) == pytest.approx(8.3)
    derived = CollusionScenario(n=10 ** 6, colluders=0, eps=1.0, delta=1e-12)
    assert amplify(derived.local_epsilon(), 10 ** 6, 1e-12) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        CollusionScenario(n=10, colluders=10, eps=1.0, delta=1e-12)

def test_poisoning_scenario():
    scenario = PoisoningScenario.from_lambda([3, 1], 0.1, 900)
    assert scenario.n_fake == 100
    assert scenario.lam(900) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        PoisoningScenario.from_lambda([1], 1.0, 10)
    with pytest.raises(ValueError):
        PoisoningScenario((), 5)

def test_ch_hash_choice():
    hash_fn = TableHash({1: 2, 2: 2, 3: 1, 4: 3}, b=3, d=4)
    assert choose_ch_hash([1, 2], hash_fn) == 2
    assert choose_ch_hash([3, 1], hash_fn) == 1
    with pytest.raises(ValueError):
        choose_ch_hash([1, 2], hash_fn, variant="spread")

def test_crafted_messages():
    rng = Rng(0)
    scenario = PoisoningScenario((2, 5), 5)
    lnf = craft_fake_users(ProtocolKind.LNF, scenario, 8, rng)
    assert lnf.payloads.tolist() == [2, 5, 2, 5, 2]
    hash_fn = TableHash({x: x for x in range(1, 11)}, b=10, d=10)
    kv = craft_fake_users(ProtocolKind.KV, scenario, 8, rng, hash_fn, kappa=2)
    assert set(kv.payloads.tolist()) <= {2 + 10, 5 + 10}
    assert kv.hashes.tolist() == (kv.payloads - 10).tolist()
    pair_hash = TableHash({x: x for x in range(1, 21)}, b=20, d=20)
    pairs = craft_fake_users(ProtocolKind.KV, scenario, 8, rng, pair_hash, kappa=2, filter_level=FilterLevel.PAIR)
    assert pairs.hashes.tolist() == pairs.payloads.tolist()
    with pytest.raises(ValueError):
        craft_fake_users(ProtocolKind.GH, scenario, 8, rng)

def test_ch_gain_of_a_fixed_hash():
    f = np.array([0.4, 0.1, 0.3, 0.2])
    hash_fn = TableHash({1: 1, 2: 2, 3: 1, 4: 2}, b=2, d=4)
    assert ch_gain_fixed_hash(0.1, f, [2], hash_fn, 2) == pytest.approx(2 * 0.1 * (1 - 0.3))
    assert ch_gain_fixed_hash(0.1, f, [2], hash_fn, 1) == pytest.approx(-2 * 0.1 * 0.3)

def test_mga_on_lnf_matches_the_analytic_gain():
    dataset = synth_zipf(2000, 20, 1.0, seed=3)
    setup = ProtocolSetup(ProtocolKind.LNF, distribution=BinomialDistribution(20, 0.5))
    for lam in (0.05, 0.1, 0.2):
        scenario = PoisoningScenario.from_lambda([4, 7], lam, dataset.n)
        result = mga_categorical(setup, dataset, scenario, trials=40, seed=1)
        f_t = true_frequencies(dataset).entries[[3, 6]].sum()
        assert result.analytic == pytest.approx(scenario.lam(dataset.n) * (1 - f_t))
        assert _close(result)

def test_mga_without_fake_users_gains_nothing():
    dataset = synth_zipf(500, 10, 1.0, seed=4)
    setup = ProtocolSetup(ProtocolKind.LNF, distribution=BinomialDistribution(10, 0.5))
    result = mga_categorical(setup, dataset, PoisoningScenario((1,), 0), trials=5)
    assert result.empirical == 0.0 and result.lam == 0.0

def test_mga_on_fme_matches_the_analytic_gain():
    dataset = synth_zipf(2000, 50, 1.0, seed=5)
    dist = BinomialDistribution(40, 0.5)
    setup = ProtocolSetup(ProtocolKind.FME, fme=FmeConfig(d1=dist, d2=dist, beta=1.0, l=10, b=10))
    scenario = PoisoningScenario.from_lambda([1], 0.1, dataset.n)
    result = mga_categorical(setup, dataset, scenario, trials=60, seed=2)
    assert _close(result)

def test_mga_on_ch_with_colliding_hash():
    dataset = synth_zipf(2000, 30, 1.0, seed=6)
    setup = ProtocolSetup(ProtocolKind.CH, distribution=BinomialDistribution(20, 0.5), b=6)
    scenario = PoisoningScenario.from_lambda([2], 0.1, dataset.n)
    result = mga_categorical(setup, dataset, scenario, trials=60, seed=3)
    assert _close(result)
    assert result.empirical > 0
    assert result.collision_rate == 1.0

def _ch_setup():
    return ProtocolSetup(ProtocolKind.CH, distribution=BinomialDistribution(20, 0.5), b=6)

def test_colliding_hash_search():
    setup = _ch_setup()
    found = find_colliding_hash(setup, [3, 7], 30, Rng(1))
    assert found is not None
    hash_fn, draws = found
    assert targets_collide([3, 7], hash_fn) and draws >= 1
    assert choose_ch_hash([3, 7], hash_fn) == hash_fn.hash(7)

    apart = TableHash({1: 1, 2: 2, 3: 3, 4: 1}, b=3, d=4)
    assert find_colliding_hash(setup.with_hash(apart), [1, 2], 4, Rng(1)) is None
    together = TableHash({1: 2, 2: 2, 3: 3, 4: 1}, b=3, d=4)
    assert find_colliding_hash(setup.with_hash(together), [1, 2], 4, Rng(1)) == (together, 1)

def test_mga_on_ch_with_several_colliding_targets():
    # A wide domain keeps the hash family close to uniform once two targets collide
    dataset = synth_zipf(2000, 600, 1.0, seed=6)
    targets = [20, 25]
    scenario = PoisoningScenario.from_lambda(targets, 0.1, dataset.n)
    result = mga_categorical(_ch_setup(), dataset, scenario, trials=60, seed=3)
    lam = scenario.lam(dataset.n)
    f_t = true_frequencies(dataset).entries[[19, 24]].sum()
    assert result.collision_rate == 1.0
    assert result.analytic == pytest.approx(lam * (len(targets) - f_t))
    # Colliding targets also share each other's mass in the crafted bucket
    assert _close(result, slack=lam * (len(targets) - 1) * f_t)
    assert abs(result.empirical - result.fixed_hash) <= 3 * result.stderr + 1e-9
    assert result.empirical > lam * (1 - f_t) + 3 * result.stderr

def test_single_target_ch_attack_gains_less():
    dataset = synth_zipf(2000, 600, 1.0, seed=6)
    scenario = PoisoningScenario.from_lambda([20, 25], 0.1, dataset.n)
    colliding = mga_categorical(_ch_setup(), dataset, scenario, trials=30, seed=3)
    single = mga_categorical(_ch_setup(), dataset, scenario, trials=30, seed=3, variant="single")
    assert single.collision_rate < 1.0
    assert single.empirical < colliding.empirical
    assert abs(single.empirical - single.fixed_hash) <= 3 * single.stderr + 1e-9

def test_m2ga_on_kv():
    dataset = synth_kv(3000, 10, ("fixed", 1), ("uniform",), seed=7)
    dist = BinomialDistribution(40, 0.5)
    setup = ProtocolSetup(ProtocolKind.KV, fme=FmeConfig(d1=dist, d2=dist, beta=1.0, l=5, b=5), kappa=1)
    scenario = PoisoningScenario.from_lambda([1], 0.1, dataset.n)
    phi, psi = m2ga_kv(setup, dataset, scenario, trials=40, seed=4)
    assert phi.quantity == 'phi' and psi.quantity == 'psi'
    assert _close(phi)
    assert _close(psi, slack=0.2 * abs(psi.analytic) + 0.02)

def test_fme_and_kv_analytic_gains_do_not_depend_on_eps():
    dataset = synth_zipf(2000, 50, 1.0, seed=9)
    kv_dataset = synth_kv(3000, 10, ("fixed", 1), ("uniform",), seed=10)
    fme_gains, phi_gains, psi_gains = [], [], []
    for eps in (0.1, 1.0, 5.0):
        budget = PrivacyBudget(eps, 1e-12)
        fme = ProtocolSetup(ProtocolKind.FME, fme=FmeConfig.calibrated(budget, beta=1.0, l=10, b=10))
        scenario = PoisoningScenario.from_lambda([1], 0.1, dataset.n)
        result = mga_categorical(fme, dataset, scenario, trials=4)
        fme_gains.append(result.analytic)

        kv = ProtocolSetup(ProtocolKind.KV, fme=FmeConfig.calibrated(budget, beta=1.0, l=5, b=5), kappa=1)
        phi, psi = m2ga_kv(kv, kv_dataset, PoisoningScenario.from_lambda([1], 0.1, kv_dataset.n), trials=4)
        phi_gains.append(phi.analytic)
        psi_gains.append(psi.analytic)

    f_1 = true_frequencies(dataset).entries[0]
    assert fme_gains == pytest.approx([scenario.lam(dataset.n) * (1 - f_1)] * 3)
    assert phi_gains == pytest.approx([phi_gains[0]] * 3)
    assert psi_gains == pytest.approx([psi_gains[0]] * 3)

def test_gain_report_rows():
    dataset = synth_zipf(300, 10, 1.0, seed=8)
    setup = ProtocolSetup(ProtocolKind.LNF, distribution=BinomialDistribution(10, 0.5))
    result = mga_categorical(setup, dataset, PoisoningScenario.from_lambda([1], 0.1, dataset.n), trials=3)
    rows = gain_report_rows([result], eps=1.0)
    assert rows[0]['protocol'] == 'lnf' and rows[0]['trials'] == 3
    assert set(rows[0]) >= {'analytic_gain', 'empirical_gain', 'stderr', 'lambda'}

def main():
    """Run the attack tests."""
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith("test_") and callable(obj)]
    for test in tests:
        print(f"Running {test.__name__}...")
        test()
    print(f"\nAll {len(tests)} attack tests passed")

if __name__ == "__main__":
    main()
