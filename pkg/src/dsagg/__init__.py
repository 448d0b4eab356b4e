"""Decentralized secure aggregation with one-time-pad masks and exact verification."""

from .algebra import RingParams, RingVector, add, make_rng, neg, sample_uniform, sum_all
from .keying import (
    IndividualKey,
    ProtocolParams,
    SourceKey,
    TrivialRegimeError,
    derive_keys,
    gen_source_key,
    key_zero_sum_check,
)
from .netsim import SimConfig, Transcript, replay, run_simulation
from .protocol import AggregateResult, Message, UserState

__version__ = "0.1.0"
