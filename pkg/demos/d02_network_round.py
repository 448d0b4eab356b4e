"""
A simulated round over a broadcast network
==========================================

The simulator runs the dealer, K users and the network in lockstep and
writes a JSON-lines transcript that can be replayed later.
"""

import dataclasses
import tempfile
from pathlib import Path

from dsagg import ProtocolParams, SimConfig, Transcript, replay, run_simulation
from dsagg.netsim import plaintext_sum

params = ProtocolParams.make(K=5, T=1, q=65536, L=4)
cfg = SimConfig(params, seed=2024, delivery_order="seeded-shuffle")
t = run_simulation(cfg)

inputs = [t.inputs()[k] for k in params.users]
print("plaintext sum:", plaintext_sum(inputs).coords)
for k, v in t.results().items():
    print(f"user {k}:", v.coords)

kinds = {}
for e in t.events:
    kinds[e.kind] = kinds.get(e.kind, 0) + 1
print("events:", kinds)

# Same seed, same bytes.
assert run_simulation(cfg).to_text() == t.to_text()

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "round.jsonl"
    t.write(path)
    print("replay:", replay(Transcript.read(path)))


# Flip the lowest bit of the last delivered payload and replay again.
events = list(t.events)
last = max(i for i, e in enumerate(events) if e.kind == "deliver")
raw = bytearray.fromhex(events[last].payload)
raw[0] ^= 1
events[last] = dataclasses.replace(events[last], payload=raw.hex())
print("replay after tamper:", replay(Transcript(t.header, tuple(events))))
