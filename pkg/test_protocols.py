#!/usr/bin/env python3
"""
Tests for the shuffle protocols: replays, the one-round property,
estimator bias and variance, and filtering behaviour.
"""

import copy
import os

import numpy as np
import pytest

from Core.analysis import (PredictorInput, ch_error, fme_comm_bound, fme_variance, gh_error, grr_variance,
                           kv_accuracy, lnf_error, mse_topk, optimal_b)
from Core.attacks import two_round_oracle_run
from Core.crypto import MockCipherSuite, RealCipherSuite
from Core.datasets import (CategoricalDataset, KVDataset, synth_zipf, true_frequencies,
                           true_kv_statistics)
from Core.dummy import BinomialDistribution, PointMass, PrivacyBudget
from Core.experiments import load_replay, replay_report, run_replay
from Core.hashing import TableHash, sample_hash
from Core.protocols import (FakeUsers, FmeConfig, ProtocolSetup, ch_run, filter_items, fme_run, gh_run, kv_run,
                            lnf_run, pair_symbols, proposal_star_run, pure_grr_run, sample_pairs, uh_run)
from Core.transport import assert_one_round
from Core.utils.constants import FilterLevel, ProtocolKind, STREAM_COLLECTOR, STREAM_USER
from Core.utils.rng import Rng

REPLAYS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "Data", "replays")

def _identity(size):
    return TableHash({x: x for x in range(1, size + 1)}, b=size, d=size)

def _fme_config(b, l=None, m=40, suite=None):
    dist = BinomialDistribution(m, 0.5)
    return FmeConfig(d1=dist, d2=dist, beta=1.0, l=l or b, b=b, alpha=0.05, suite=suite or MockCipherSuite())

def test_toy_example_replay():
    document = load_replay(os.path.join(REPLAYS, "toy_example.json"))
    output = run_replay(document)
    assert output.selected.tolist() == [2, 8]
    assert output.filter_result.threshold == 3
    assert output.filter_result.counts.tolist() == [5, 0, 2, 1]
    assert output.dense() == pytest.approx([0.0, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.6], abs=1e-12)
    assert replay_report(document, output)['matches_expected']

def test_lnf_replay_with_sampling():
    document = load_replay(os.path.join(REPLAYS, "lnf_sampling.json"))
    output = run_replay(document)
    assert output.counts.tolist() == [3, 2, 3]
    assert output.dense() == pytest.approx([2 / 3, 1 / 3, 2 / 3])
    assert replay_report(document, output)['matches_expected']

def test_replay_report_flags_mismatch():
    document = copy.deepcopy(load_replay(os.path.join(REPLAYS, "toy_example.json")))
    document['expected']['selected'] = [2]
    assert not replay_report(document, run_replay(document))['matches_expected']

def test_replay_rejects_bad_permutation():
    document = copy.deepcopy(load_replay(os.path.join(REPLAYS, "toy_example.json")))
    document['shuffler']['permutations']['first'] = [1, 1, 2, 3, 4, 5, 6, 7]
    with pytest.raises(ValueError):
        run_replay(document)

def test_fme_is_one_round_with_exact_user_bits():
    dataset = synth_zipf(300, 50, 1.0, seed=1)
    config = _fme_config(b=10)
    hash_fn = sample_hash(50, 10, Rng(2).stream(STREAM_COLLECTOR))
    output = fme_run(dataset, config, hash_fn, Rng(3))
    transcript = output.transcript
    assert assert_one_round(transcript)
    assert transcript.rounds['users'] == 1
    assert transcript.c_us == (712 + 2072) * dataset.n
    assert transcript.lambda_bits == output.selected.size * 6

def test_two_round_oracle_fails_one_round_but_agrees():
    dataset = synth_zipf(300, 50, 1.0, seed=1)
    config = _fme_config(b=10)
    hash_fn = sample_hash(50, 10, Rng(2).stream(STREAM_COLLECTOR))
    oracle = two_round_oracle_run(dataset, config, hash_fn, Rng(3))
    assert not assert_one_round(oracle.transcript)
    assert oracle.transcript.rounds['users'] == 2
    one_round = fme_run(dataset, config, hash_fn, Rng(3))
    assert oracle.selected.tolist() == one_round.selected.tolist()
    assert np.allclose(oracle.estimates, one_round.estimates)

def test_kv_transcript_is_one_round():
    records = [[(1 + u % 5, 1.0 if u % 3 else -1.0)] for u in range(200)]
    dataset = KVDataset.from_records(records, d=5)
    config = _fme_config(b=6)
    output = kv_run(dataset, config, 1, _identity(6), Rng(4))
    assert assert_one_round(output.transcript)
    assert output.transcript.c_us == (712 + 2072) * dataset.n

def test_noiseless_lnf_is_exact():
    dataset = CategoricalDataset(np.array([1, 2, 2, 3, 3, 3, 5]), 5)
    output = lnf_run(dataset, PointMass(0), 1.0, MockCipherSuite(), Rng(0))
    assert np.allclose(output.dense(), true_frequencies(dataset).entries)
    assert output.transcript.c_tot == 712 * 2 * dataset.n

def test_noiseless_fme_recovers_present_items():
    dataset = CategoricalDataset(np.array([1, 2, 2, 4, 4, 4]), 5)
    config = FmeConfig(d1=PointMass(0), d2=PointMass(0), beta=1.0, l=5, b=5)
    output = fme_run(dataset, config, _identity(5), Rng(0))
    assert output.selected.tolist() == [1, 2, 4]
    assert output.estimates == pytest.approx([1 / 6, 2 / 6, 3 / 6])
    assert output.estimate(3) is None

def test_fme_rejects_bad_parameters():
    dataset = CategoricalDataset(np.array([1, 2]), 4)
    with pytest.raises(ValueError):
        fme_run(dataset, _fme_config(b=4, l=5), _identity(4), Rng(0))
    with pytest.raises(ValueError):
        fme_run(dataset, _fme_config(b=3), _identity(4), Rng(0))

def test_calibrated_fme_config_is_certified():
    config = FmeConfig.calibrated(PrivacyBudget(1.0, 1e-10), beta=0.9, l=8, b=16)
    assert config.is_certified()
    assert config.d1.mean > 0 and config.d2.mean > 0

def test_gh_with_one_group_matches_ch():
    dataset = synth_zipf(500, 40, 1.0, seed=2)
    dist = BinomialDistribution(20, 0.5)
    hash_fn = sample_hash(40, 8, Rng(7).stream(STREAM_COLLECTOR))
    ch = ch_run(dataset, dist, 1.0, hash_fn, MockCipherSuite(), Rng(7))
    gh = gh_run(dataset, dist, 1.0, 1, 8, MockCipherSuite(), Rng(7))
    assert gh.protocol is ProtocolKind.GH
    assert np.allclose(ch.estimates, gh.estimates)

def test_grouped_hash_rejects_bad_groups():
    dataset = CategoricalDataset(np.array([1, 2, 3]), 3)
    with pytest.raises(ValueError):
        gh_run(dataset, PointMass(0), 1.0, 4, 2, MockCipherSuite(), Rng(0))

def test_kv_all_users_hold_one_maxed_key():
    dataset = KVDataset.from_records([[(1, 1.0)] for _ in range(50)], d=3)
    config = FmeConfig(d1=PointMass(0), d2=PointMass(0), beta=1.0, l=4, b=4)
    output = kv_run(dataset, config, 1, _identity(4), Rng(0))
    assert output.selected.tolist() == [1]
    assert output.estimates == pytest.approx([1.0])
    assert output.psi == pytest.approx([1.0])

def test_kv_padding_and_pair_symbols():
    dataset = KVDataset.from_records([[(1, 1.0)], [(2, -1.0)]], d=2)
    keys, values = sample_pairs(dataset, 3, Rng(1).stream(STREAM_USER))
    assert keys.min() >= 1 and keys.max() <= 5
    assert set(values.tolist()) <= {-1, 1}
    assert pair_symbols(np.array([1, 2]), np.array([-1, 1]), 5).tolist() == [1, 7]
    with pytest.raises(ValueError):
        kv_run(dataset, _fme_config(b=2), 0, _identity(3), Rng(0))

def test_pair_level_filtering_biases_mean_estimates():
    # Every key has Ψ = 0.5 through a 3:1 split of +1 and -1 values
    records = [[(1 + u % 4, -1.0 if (u // 4) % 4 == 0 else 1.0)] for u in range(4000)]
    dataset = KVDataset.from_records(records, d=4)
    noiseless = dict(d1=PointMass(0), d2=PointMass(0), beta=1.0, l=4)

    by_key = kv_run(dataset, FmeConfig(b=5, **noiseless), 1, _identity(5), Rng(0),
                    filter_level=FilterLevel.KEY)
    by_pair = kv_run(dataset, FmeConfig(b=10, **noiseless), 1, _identity(10), Rng(0),
                     filter_level=FilterLevel.PAIR)
    key_bias = np.abs(by_key.psi - 0.5).mean()
    pair_bias = np.abs(by_pair.psi - 0.5).mean()
    assert by_key.selected.tolist() == by_pair.selected.tolist() == [1, 2, 3, 4]
    assert key_bias == pytest.approx(0.0)
    assert pair_bias >= 5 * key_bias and pair_bias == pytest.approx(0.5)

def test_filter_keeps_l_largest_with_small_hash_ties():
    result = filter_items(np.array([5, 7, 7, 1, 7]), 0.05, PointMass(0), 2)
    assert result.selected_hashes.tolist() == [2, 3]
    assert result.threshold == 1
    assert result.items.size == 0

def test_filter_false_positive_rate_is_at_most_alpha():
    dist = BinomialDistribution(30, 0.5)
    alpha, b, repeats = 0.1, 100, 200
    generator = Rng(11).stream("shuffler")
    selected = 0
    for _ in range(repeats):
        selected += filter_items(dist.sample(generator, b), alpha, dist, b).selected_hashes.size
    trials = b * repeats
    assert selected / trials <= alpha + 3 * np.sqrt(alpha * (1 - alpha) / trials)

def _mean_within(draws, truth, slack=0.0):
    draws = np.asarray(draws, dtype=float)
    return abs(draws.mean() - truth) <= 3 * draws.std(ddof=1) / np.sqrt(draws.size) + slack

def _random_table(d, b, generator):
    return TableHash(dict(zip(range(1, d + 1), generator.integers(1, b + 1, size=d).tolist())), b=b, d=d)

def test_lnf_is_unbiased_with_predicted_variance():
    dataset = synth_zipf(200, 10, 1.0, seed=5)
    dist = BinomialDistribution(40, 0.5)
    f = true_frequencies(dataset).entries
    draws = np.array([lnf_run(dataset, dist, 0.8, MockCipherSuite(), Rng(6).child(t), keep_hop_log=False)
                      .estimates[0] for t in range(3000)])
    assert _mean_within(draws, f[0])
    assert draws.var(ddof=1) == pytest.approx(lnf_error(f[0], dataset.n, 0.8, dist.variance), rel=0.1)

def test_ch_is_unbiased_over_hash_draws():
    # A domain much larger than b keeps the family's collision rate close to 1/b
    dataset = synth_zipf(1000, 2000, 1.0, seed=6)
    setup = ProtocolSetup(ProtocolKind.CH, distribution=BinomialDistribution(20, 0.5), b=8, keep_hop_log=False)
    f = true_frequencies(dataset).entries
    draws = np.array([setup.run(dataset, Rng(8).child(t)).estimates[0] for t in range(400)])
    assert _mean_within(draws, f[0])

def test_ch_variance_over_random_tables_matches_the_collision_term():
    dataset = synth_zipf(1000, 50, 0.0, seed=13)
    dist = BinomialDistribution(40, 0.5)
    beta, b = 0.8, 10
    f = true_frequencies(dataset).entries
    generator = Rng(14).stream(STREAM_COLLECTOR)
    draws = np.array([ch_run(dataset, dist, beta, _random_table(dataset.d, b, generator), MockCipherSuite(),
                             Rng(15).child(t), keep_hop_log=False).estimates[0] for t in range(3000)])
    assert _mean_within(draws, f[0])
    assert draws.var(ddof=1) == pytest.approx(ch_error(f, 1, dataset.n, beta, b, dist.variance), rel=0.1)

def _grouped_dataset():
    return synth_zipf(200, 1000, 1.0, seed=16)

def test_uh_is_unbiased_over_per_user_hashes():
    dataset = _grouped_dataset()
    dist = BinomialDistribution(4, 0.5)
    f = true_frequencies(dataset).entries
    outputs = [uh_run(dataset, dist, 1.0, 4, MockCipherSuite(), Rng(17).child(t), keep_hop_log=False)
               for t in range(600)]
    assert all(output.protocol is ProtocolKind.UH for output in outputs)
    assert _mean_within([output.estimates[0] for output in outputs], f[0])

def test_gh_error_grows_with_group_count():
    dataset = _grouped_dataset()
    dist = BinomialDistribution(4, 0.5)
    f = true_frequencies(dataset).entries
    predicted = [gh_error(f, 1, dataset.n, 1.0, 4, dist.variance, g) for g in (1, 10, dataset.n)]
    assert predicted[0] < predicted[1] < predicted[2]

    spread = {}
    for groups in (1, dataset.n):
        draws = [gh_run(dataset, dist, 1.0, groups, 4, MockCipherSuite(), Rng(18).child(t), keep_hop_log=False)
                 .estimates[0] for t in range(300)]
        spread[groups] = np.var(draws, ddof=1)
    assert spread[1] < spread[dataset.n]

def test_fme_is_conditionally_unbiased_with_predicted_variance():
    dataset = synth_zipf(200, 20, 1.0, seed=7)
    dist = BinomialDistribution(40, 0.5)
    config = FmeConfig(d1=dist, d2=dist, beta=0.8, l=20, b=20, keep_hop_log=False)
    hash_fn = _identity(20)
    f = true_frequencies(dataset).entries
    draws = []
    for t in range(3000):
        output = fme_run(dataset, config, hash_fn, Rng(9).child(t))
        assert 1 in output.filter_result
        draws.append(output.estimate(1))
    draws = np.array(draws)
    assert _mean_within(draws, f[0])
    assert draws.var(ddof=1) == pytest.approx(fme_variance(f[0], dataset.n, 0.8, dist.variance), rel=0.1)

def test_kv_frequency_is_unbiased_with_predicted_variance():
    # Every user holds one or two pairs, so κ = 2 covers them all
    records = [[(1 + u % 3, 0.5)] + ([(4, -0.5)] if u % 2 == 0 else []) for u in range(1000)]
    dataset = KVDataset.from_records(records, d=4)
    truth = true_kv_statistics(dataset)
    dist = BinomialDistribution(40, 0.5)
    config = FmeConfig(d1=dist, d2=dist, beta=0.8, l=6, b=6, keep_hop_log=False)
    phi, psi = [], []
    for t in range(2000):
        output = kv_run(dataset, config, 2, _identity(6), Rng(19).child(t))
        assert 1 in output.filter_result
        position = int(np.searchsorted(output.selected, 1))
        phi.append(output.estimates[position])
        psi.append(output.psi[position])

    inp = PredictorInput(n=dataset.n, d=dataset.d, kappa=2, beta=0.8, var2=dist.variance, phi=truth.phi,
                         psi=truth.psi)
    expected = kv_accuracy(inp, 1)
    assert _mean_within(phi, expected['phi_mean'])
    assert np.var(phi, ddof=1) == pytest.approx(expected['phi_variance'], rel=0.1)
    assert _mean_within(psi, expected['psi_mean'], slack=0.02)

def test_fme_server_bits_stay_within_the_bound():
    dataset = synth_zipf(500, 5000, 0.0, seed=23)
    dist = BinomialDistribution(20, 0.5)
    inp = PredictorInput(n=dataset.n, d=dataset.d, beta=1.0, alpha=0.05, mu1=dist.mean, mu2=dist.mean)
    b = int(round(optimal_b(inp)))
    config = FmeConfig(d1=dist, d2=dist, beta=1.0, l=b, b=b, alpha=0.05, keep_hop_log=False)
    bound = fme_comm_bound(PredictorInput(n=dataset.n, d=dataset.d, b=b, l=b, beta=1.0, alpha=0.05,
                                          mu1=dist.mean, mu2=dist.mean))
    within = 0
    for t in range(100):
        rng = Rng(24).child(t)
        output = fme_run(dataset, config, sample_hash(dataset.d, b, rng.stream(STREAM_COLLECTOR)), rng)
        assert output.transcript.c_us == bound['c_us']
        within += int(output.transcript.c_sd <= bound['c_sd_bound'])
    assert within >= 95

def test_pure_grr_is_unbiased():
    dataset = synth_zipf(2000, 10, 1.0, seed=8)
    f = true_frequencies(dataset).entries
    draws = np.array([pure_grr_run(dataset, 2.0, MockCipherSuite(), Rng(10).child(t)).estimates[0]
                      for t in range(200)])
    predicted_sd = np.sqrt(grr_variance(f[0], dataset.n, 2.0, dataset.d))
    assert abs(draws.mean() - f[0]) <= 4 * predicted_sd / np.sqrt(draws.size)
    with pytest.raises(ValueError):
        pure_grr_run(dataset, 0.0, MockCipherSuite(), Rng(0))

def test_proposal_star_needs_extra_budget():
    dataset = synth_zipf(300, 20, 1.0, seed=9)
    config = _fme_config(b=5)
    with pytest.raises(ValueError):
        ProtocolSetup(ProtocolKind.PROPOSAL_STAR, fme=config, extra_eps=0.0).run(dataset, Rng(0))
    output = ProtocolSetup(ProtocolKind.PROPOSAL_STAR, fme=config, extra_eps=1.0).run(dataset, Rng(0))
    assert output.protocol is ProtocolKind.PROPOSAL_STAR
    assert assert_one_round(output.transcript)

def test_proposal_star_with_vanishing_noise_matches_fme():
    dataset = synth_zipf(400, 20, 1.0, seed=12)
    config = _fme_config(b=20, l=8)
    hash_fn = _identity(20)
    plain = fme_run(dataset, config, hash_fn, Rng(6))
    noisy = proposal_star_run(dataset, config, 400.0, hash_fn, Rng(6))
    assert noisy.protocol is ProtocolKind.PROPOSAL_STAR
    assert noisy.selected.tolist() == plain.selected.tolist()
    assert noisy.estimates == pytest.approx(plain.estimates)

def test_proposal_star_inflates_mse_less_than_twofold():
    dataset = synth_zipf(1000, 100, 1.0, seed=20)
    truth = true_frequencies(dataset).entries
    config = FmeConfig.calibrated(PrivacyBudget(1.0, 1e-12), beta=0.5, l=50, b=50, keep_hop_log=False)
    plain, noisy = [], []
    for t in range(300):
        hash_fn = sample_hash(dataset.d, config.b, Rng(21).child(t).stream(STREAM_COLLECTOR))
        plain.append(mse_topk(truth, fme_run(dataset, config, hash_fn, Rng(22).child(t)).dense(), 10))
        noisy.append(mse_topk(truth, proposal_star_run(dataset, config, 1.0, hash_fn, Rng(22).child(t)).dense(), 10))
    assert np.mean(plain) < np.mean(noisy) < 2 * np.mean(plain)

def test_fake_users_are_appended():
    dataset = CategoricalDataset(np.array([1, 1, 2]), 3)
    output = lnf_run(dataset, PointMass(0), 1.0, MockCipherSuite(), Rng(0), FakeUsers(np.array([3, 3, 3])))
    assert output.n_total == 6
    assert output.dense() == pytest.approx([2 / 6, 1 / 6, 3 / 6])

def test_fme_with_real_cipher_suite():
    dataset = CategoricalDataset(np.array([1, 1, 1, 2, 3, 1, 1, 2]), 4)
    config = FmeConfig(d1=PointMass(0), d2=PointMass(0), beta=1.0, l=4, b=4, suite=RealCipherSuite(256))
    output = fme_run(dataset, config, _identity(4), Rng(1))
    assert output.selected.tolist() == [1, 2, 3]
    assert output.estimates == pytest.approx([5 / 8, 2 / 8, 1 / 8])
    assert output.transcript.c_us == (712 + 2072) * dataset.n

def main():
    """Run the protocol tests."""
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith("test_") and callable(obj)]
    for test in tests:
        print(f"Running {test.__name__}...")
        test()
    print(f"\nAll {len(tests)} protocol tests passed")

if __name__ == "__main__":
    main()
