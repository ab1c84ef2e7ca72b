"""Core module for the ShuffleFME framework."""

from Core.datasets import (CategoricalDataset, KVDataset, synth_kv, synth_zipf, true_frequencies,
                           true_kv_statistics, user_sample)
from Core.dummy import (AsymmetricGeometric, BinomialDistribution, PointMass, PrivacyBudget, calibrate_fme,
                        calibrate_lnf, calibrate_offset, certify_dp)
from Core.hashing import TableHash, UniversalHash, sample_hash
from Core.crypto import MockCipherSuite, RealCipherSuite, make_suite
from Core.transport import Network, Transcript, assert_one_round
from Core.protocols import (FmeConfig, ProtocolSetup, ch_run, fme_run, gh_run, kv_run, lnf_run,
                            proposal_star_run, pure_grr_run, uh_run)
from Core.attacks import mga_categorical, m2ga_kv, two_round_oracle_run
from Core.config import ExperimentConfig, load_config
from Core.experiments import run_experiment, run_replay
from Core.utils.rng import Rng

# Make the most important functions and classes available at the top level
__all__ = [
    'CategoricalDataset',
    'KVDataset',
    'synth_kv',
    'synth_zipf',
    'true_frequencies',
    'true_kv_statistics',
    'user_sample',
    'AsymmetricGeometric',
    'BinomialDistribution',
    'PointMass',
    'PrivacyBudget',
    'calibrate_fme',
    'calibrate_lnf',
    'calibrate_offset',
    'certify_dp',
    'TableHash',
    'UniversalHash',
    'sample_hash',
    'MockCipherSuite',
    'RealCipherSuite',
    'make_suite',
    'Network',
    'Transcript',
    'assert_one_round',
    'FmeConfig',
    'ProtocolSetup',
    'ch_run',
    'fme_run',
    'gh_run',
    'kv_run',
    'lnf_run',
    'proposal_star_run',
    'pure_grr_run',
    'uh_run',
    'mga_categorical',
    'm2ga_kv',
    'two_round_oracle_run',
    'ExperimentConfig',
    'load_config',
    'run_experiment',
    'run_replay',
    'Rng',
]
