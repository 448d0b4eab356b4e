import dataclasses
import random
from pathlib import Path

import pytest

from dsagg.algebra import RingVector, make_rng
from dsagg.keying import ProtocolParams, TrivialRegimeError, gen_source_key
from dsagg.netsim import (
    KeyRegistry,
    KeyReuseError,
    LivenessError,
    SimConfig,
    SimulationError,
    Transcript,
    TranscriptError,
    delivery_schedule,
    exit_status,
    plaintext_sum,
    replay,
    run_batch,
    run_simulation,
)
from dsagg.protocol import Message

GOLDEN = Path(__file__).parent / "golden" / "k3_example.jsonl"


def V(q, *c):
    return RingVector.of(q, c)


def example_cfg(**kw):
    p = ProtocolParams.make(3, 0, 2, 1)
    return SimConfig(p, 7, (V(2, 1), V(2, 0), V(2, 1)), **kw)


def test_three_user_run_matches_golden():
    t = run_simulation(example_cfg())
    assert t.to_text() == GOLDEN.read_text()
    assert [t.keys()[k] for k in (1, 2, 3)] == [V(2, 1), V(2, 0), V(2, 1)]
    assert set(t.messages().values()) == {V(2, 0)}
    assert set(t.results().values()) == {V(2, 0)}
    assert exit_status(t) == 0


def test_event_counts():
    p = ProtocolParams.make(5, 1, 7, 3)
    t = run_simulation(SimConfig(p, 123))
    assert len(t.of_kind("broadcast")) == 5
    assert len(t.of_kind("deliver")) == 5 * 4
    assert [e.tick for e in t.events] == list(range(len(t.events)))


def test_same_seed_byte_identical():
    p = ProtocolParams.make(4, 1, 65536, 4)
    a = run_simulation(SimConfig(p, 2**63 + 5, delivery_order="seeded-shuffle"))
    b = run_simulation(SimConfig(p, 2**63 + 5, delivery_order="seeded-shuffle"))
    assert a.to_text().encode() == b.to_text().encode()


def test_large_random_run_matches_plaintext():
    p = ProtocolParams.make(6, 0, 65536, 32)
    t = run_simulation(SimConfig(p, 31337))
    inputs = t.inputs()
    expected = plaintext_sum([inputs[k] for k in p.users])
    assert set(t.results().values()) == {expected}
    # uplink accounting: L symbols per user, K*L in total
    assert sum(len(v) for v in t.messages().values()) == 6 * 32


@pytest.mark.parametrize("seed", range(10))
def test_delivery_order_does_not_change_results(seed):
    p = ProtocolParams.make(5, 2, 7, 2)
    a = run_simulation(SimConfig(p, seed, delivery_order="round-robin"))
    b = run_simulation(SimConfig(p, seed, delivery_order="seeded-shuffle"))
    assert a.results() == b.results()


def test_round_robin_schedule():
    assert delivery_schedule(3, "round-robin", random.Random(0)) == [
        (1, 2), (1, 3), (2, 3), (2, 1), (3, 1), (3, 2)
    ]


def test_trivial_regime_rejected_at_config():
    with pytest.raises(TrivialRegimeError):
        SimConfig(ProtocolParams.make(2, 0), 1)


def test_explicit_inputs_validated():
    p = ProtocolParams.make(3)
    with pytest.raises(ValueError):
        SimConfig(p, 1, (V(2, 1),) * 2)
    with pytest.raises(ValueError):
        SimConfig(p, 1, (V(3, 1),) * 3)
    with pytest.raises(ValueError):
        SimConfig(p, 1, delivery_order="random")


def test_transcript_roundtrip(tmp_path):
    t = run_simulation(SimConfig(ProtocolParams.make(4, 1, 7, 2), 9))
    path = tmp_path / "t.jsonl"
    t.write(path)
    assert Transcript.read(path) == t


def test_replay_fresh():
    t = run_simulation(SimConfig(ProtocolParams.make(4, 0, 7, 3), 4))
    assert replay(t)
    assert replay(t.to_text())
    assert replay(GOLDEN.read_text())


def flip_bit(hex_payload: str, bit: int) -> str:
    raw = bytearray(bytes.fromhex(hex_payload))
    raw[bit // 8] ^= 1 << (bit % 8)
    return raw.hex()


def test_replay_flipped_payload_bit():
    t = Transcript.from_text(GOLDEN.read_text())
    ev = list(t.events)
    i = next(i for i, e in enumerate(ev) if e.kind == "deliver")
    ev[i] = dataclasses.replace(ev[i], payload=flip_bit(ev[i].payload, 0))
    tampered = Transcript(t.header, tuple(ev))
    assert not replay(tampered)
    assert not replay(tampered.to_text())


def test_replay_reordered_deliveries():
    t = run_simulation(example_cfg())
    ev = list(t.events)
    d = [i for i, e in enumerate(ev) if e.kind == "deliver"]
    # swap two deliveries but keep ticks increasing
    a, b = ev[d[0]], ev[d[1]]
    ev[d[0]] = dataclasses.replace(b, tick=a.tick)
    ev[d[1]] = dataclasses.replace(a, tick=b.tick)
    assert not replay(Transcript(t.header, tuple(ev)))


@pytest.mark.parametrize(
    "text",
    [
        "",
        "not json\n",
        '{"schema":"other"}\n',
        '{"schema":"dsa-transcript/1"}\n',
    ],
)
def test_replay_malformed(text):
    with pytest.raises(TranscriptError):
        replay(text)


def test_malformed_event_record():
    head = GOLDEN.read_text().splitlines()[0]
    with pytest.raises(TranscriptError):
        Transcript.from_text(head + '\n{"kind":"deliver","tick":1}\n')
    with pytest.raises(TranscriptError):
        Transcript.from_text(head + '\n{"kind":"teleport","tick":1,"sender":1,"receiver":2,"payload":""}\n')


def test_key_reuse_across_epochs_rejected():
    p = ProtocolParams.make(4, 1, 2, 4)
    registry = KeyRegistry()
    src = gen_source_key(p, make_rng(1), epoch=1)
    run_simulation(SimConfig(p, 10, epoch=1), source_key=src, registry=registry)
    with pytest.raises(KeyReuseError):
        run_simulation(SimConfig(p, 11, epoch=2), source_key=src, registry=registry)
    with pytest.raises(KeyReuseError):
        restamped = dataclasses.replace(src, epoch=2)
        run_simulation(SimConfig(p, 11, epoch=2), source_key=restamped, registry=registry)


def test_epoch_reuse_rejected():
    p = ProtocolParams.make(3)
    registry = KeyRegistry()
    run_simulation(SimConfig(p, 5), registry=registry)
    with pytest.raises(KeyReuseError):
        run_simulation(SimConfig(p, 5), registry=registry)
    run_simulation(SimConfig(p, 5, epoch=6), registry=registry)


def test_external_key_replays():
    p = ProtocolParams.make(4, 0, 11, 2)
    src = gen_source_key(p, make_rng(77), epoch=3)
    t = run_simulation(SimConfig(p, 1, epoch=3), source_key=src)
    assert t.header["key_source"] == "external"
    assert t.agreement()
    assert replay(t)


def test_dropped_message_is_liveness_failure():
    def drop_to_user_2(m: Message, receiver: int):
        return None if (m.sender, receiver) == (1, 2) else m

    with pytest.raises(LivenessError) as exc:
        run_simulation(SimConfig(ProtocolParams.make(3), 1), fault=drop_to_user_2)
    assert exc.value.user == 2


def test_misrouted_message_carries_user_context():
    def redirect(m: Message, receiver: int):
        return Message(receiver, m.epoch, m.payload)

    with pytest.raises(SimulationError) as exc:
        run_simulation(SimConfig(ProtocolParams.make(3), 1), fault=redirect)
    assert exc.value.user == 2


def test_corrupting_fault_breaks_agreement():
    def flip(m: Message, receiver: int):
        if (m.sender, receiver) == (1, 3):
            return Message(m.sender, m.epoch, m.payload + V(2, 1))
        return m

    t = run_simulation(SimConfig(ProtocolParams.make(3), 1), fault=flip)
    assert not t.agreement()
    assert exit_status(t) == 1


def test_batch_preserves_order():
    p = ProtocolParams.make(3, 0, 7, 2)
    cfgs = [SimConfig(p, s) for s in range(6)]
    serial = run_batch(cfgs)
    parallel = run_batch(cfgs, workers=2)
    assert [t.to_text() for t in serial] == [t.to_text() for t in parallel]
    assert [t.header["seed"] for t in parallel] == list(range(6))
