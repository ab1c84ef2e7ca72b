"""Protocol state machines of the augmented shuffle model."""

from Core.protocols.base import (FakeUsers, FilterResult, ProtocolOutput, ScriptedRandomness,
                                 ShufflerRandomness)
from Core.protocols.filtering import filter_items
from Core.protocols.fme import FmeConfig, fme_run, proposal_star_run, two_stage_shuffle
from Core.protocols.grr import grr_keep_probability, pure_grr_run
from Core.protocols.kv import kv_run, pair_symbols, sample_pairs
from Core.protocols.lnf import augmented_shuffle, ch_run, gh_run, lnf_run, uh_run
from Core.protocols.runner import ProtocolSetup

__all__ = [
    'FakeUsers',
    'FilterResult',
    'ProtocolOutput',
    'ScriptedRandomness',
    'ShufflerRandomness',
    'filter_items',
    'FmeConfig',
    'fme_run',
    'proposal_star_run',
    'two_stage_shuffle',
    'grr_keep_probability',
    'pure_grr_run',
    'kv_run',
    'pair_symbols',
    'sample_pairs',
    'augmented_shuffle',
    'ch_run',
    'gh_run',
    'lnf_run',
    'uh_run',
    'ProtocolSetup',
]
