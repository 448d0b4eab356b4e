"""Deterministic simulation of K users on orthogonal, error-free broadcast links.

One run has three phases separated by hard barriers: the dealer hands out
keys, every user broadcasts, every user recovers. Simulated time is a plain
event counter. Each run yields a :class:`Transcript` that serializes to
line-delimited JSON and can be replayed bit-for-bit from its header.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .algebra import DimensionError, RingParams, RingVector, sample_uniform
from .keying import ProtocolParams, SourceKey, derive_keys, gen_source_key
from .protocol import Message, NotReadyError, ProtocolError, UserState

SCHEMA = "dsa-transcript/1"
DELIVERY_ORDERS = ("round-robin", "seeded-shuffle")
DEALER = 0
ALL = 0

# kind -> meaning of (sender, receiver)
EVENT_KINDS = ("input", "key", "broadcast", "deliver", "result")

FaultHook = Callable[[Message, int], "Message | None"]


class SimulationError(RuntimeError):
    def __init__(self, user: int, cause: Exception):
        super().__init__(f"user {user}: {cause}")
        self.user = user
        self.cause = cause


class LivenessError(SimulationError):
    """A user never received all K-1 peer messages."""


class KeyReuseError(RuntimeError):
    pass


class TranscriptError(ValueError):
    """Transcript text is structurally malformed."""


@dataclass(frozen=True)
class SimConfig:
    params: ProtocolParams
    seed: int
    inputs: tuple[RingVector, ...] | None = None
    delivery_order: str = "round-robin"
    epoch: int | None = None

    def __post_init__(self):
        if self.delivery_order not in DELIVERY_ORDERS:
            raise ValueError(f"delivery_order must be one of {DELIVERY_ORDERS}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.inputs is not None:
            inputs = tuple(self.inputs)
            if len(inputs) != self.params.K:
                raise ValueError(f"need exactly K={self.params.K} inputs, got {len(inputs)}")
            for w in inputs:
                if w.params != self.params.ring:
                    raise DimensionError(f"input in {w.params}, expected {self.params.ring}")
            object.__setattr__(self, "inputs", inputs)

    @property
    def input_mode(self) -> str:
        return "random" if self.inputs is None else "explicit"

    @property
    def run_epoch(self) -> int:
        return self.seed if self.epoch is None else self.epoch


class KeyRegistry:
    """Tracks epochs and externally supplied key material already consumed.

    Identical external key material is refused even if it was drawn fresh;
    at desk-scale parameters that is a conservative false positive.
    """

    def __init__(self):
        self._epochs: set[int] = set()
        self._material: dict[bytes, int] = {}

    def claim(self, src: SourceKey, epoch: int, external: bool) -> None:
        if src.epoch != epoch:
            raise KeyReuseError(f"source key bound to epoch {src.epoch} offered for epoch {epoch}")
        if epoch in self._epochs:
            raise KeyReuseError(f"epoch {epoch} already ran")
        fp = src.fingerprint()
        if external and fp in self._material:
            raise KeyReuseError(f"key material from epoch {self._material[fp]} reused in epoch {epoch}")
        self._epochs.add(epoch)
        if external:
            self._material[fp] = epoch


@dataclass(frozen=True)
class Event:
    kind: str
    tick: int
    sender: int
    receiver: int
    payload: str  # hex of 8-byte LE symbols

    def record(self) -> dict:
        return {
            "kind": self.kind,
            "tick": self.tick,
            "sender": self.sender,
            "receiver": self.receiver,
            "payload": self.payload,
        }


@dataclass(frozen=True)
class Transcript:
    header: dict
    events: tuple[Event, ...]

    @property
    def epoch(self) -> int:
        return self.header["epoch"]

    @property
    def ring(self) -> RingParams:
        return RingParams(self.header["q"], self.header["L"])

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def decode(self, e: Event) -> RingVector:
        try:
            return RingVector.from_bytes(self.ring, bytes.fromhex(e.payload))
        except ValueError as exc:
            raise TranscriptError(f"bad payload at tick {e.tick}: {exc}") from exc

    def results(self) -> dict[int, RingVector]:
        return {e.sender: self.decode(e) for e in self.of_kind("result")}

    def inputs(self) -> dict[int, RingVector]:
        return {e.sender: self.decode(e) for e in self.of_kind("input")}

    def keys(self) -> dict[int, RingVector]:
        return {e.receiver: self.decode(e) for e in self.of_kind("key")}

    def messages(self) -> dict[int, RingVector]:
        return {e.sender: self.decode(e) for e in self.of_kind("broadcast")}

    def agreement(self) -> bool:
        values = set(self.results().values())
        return len(values) == 1 and len(self.of_kind("result")) == self.header["K"]

    def config(self) -> SimConfig:
        h = self.header
        params = ProtocolParams.make(h["K"], h["T"], h["q"], h["L"])
        inputs = None
        if h["inputs"] is not None:
            inputs = tuple(RingVector.from_bytes(params.ring, bytes.fromhex(x)) for x in h["inputs"])
        return SimConfig(params, h["seed"], inputs, h["delivery_order"], h["epoch"])

    def to_text(self) -> str:
        lines = [json.dumps(self.header, separators=(",", ":"))]
        lines += [json.dumps(e.record(), separators=(",", ":")) for e in self.events]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Transcript":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise TranscriptError("empty transcript")
        try:
            header = json.loads(lines[0])
            records = [json.loads(ln) for ln in lines[1:]]
        except json.JSONDecodeError as exc:
            raise TranscriptError(f"not line-delimited JSON: {exc}") from exc
        if not isinstance(header, dict) or header.get("schema") != SCHEMA:
            raise TranscriptError(f"missing or unknown schema header (want {SCHEMA})")
        for key in _HEADER_FIELDS:
            if key not in header:
                raise TranscriptError(f"header lacks field {key!r}")
        events = []
        for i, r in enumerate(records, start=2):
            if not isinstance(r, dict) or list(r) != ["kind", "tick", "sender", "receiver", "payload"]:
                raise TranscriptError(f"line {i}: bad event record")
            if r["kind"] not in EVENT_KINDS or not isinstance(r["payload"], str):
                raise TranscriptError(f"line {i}: bad event kind or payload")
            if not all(isinstance(r[k], int) for k in ("tick", "sender", "receiver")):
                raise TranscriptError(f"line {i}: non-integer tick/sender/receiver")
            events.append(Event(**r))
        return cls(header, tuple(events))

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "Transcript":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


_HEADER_FIELDS = (
    "schema", "epoch", "K", "T", "q", "L", "seed",
    "input_mode", "delivery_order", "key_source", "inputs",
)


def _header(cfg: SimConfig, key_source: str) -> dict:
    p = cfg.params
    return {
        "schema": SCHEMA,
        "epoch": cfg.run_epoch,
        "K": p.K,
        "T": p.T,
        "q": p.ring.q,
        "L": p.ring.L,
        "seed": cfg.seed,
        "input_mode": cfg.input_mode,
        "delivery_order": cfg.delivery_order,
        "key_source": key_source,
        "inputs": None if cfg.inputs is None else [w.hex() for w in cfg.inputs],
    }


def delivery_schedule(K: int, order: str, rng: random.Random) -> list[tuple[int, int]]:
    """(sender, receiver) pairs; round-robin starts each sender at its successor."""
    pairs = [
        (s, (s - 1 + j) % K + 1)
        for s in range(1, K + 1)
        for j in range(1, K)
    ]
    if order == "seeded-shuffle":
        rng.shuffle(pairs)
    return pairs


def run_simulation(
    cfg: SimConfig,
    *,
    source_key: SourceKey | None = None,
    registry: KeyRegistry | None = None,
    fault: FaultHook | None = None,
) -> Transcript:
    params = cfg.params
    epoch = cfg.run_epoch
    rng = random.Random(cfg.seed)
    registry = registry if registry is not None else KeyRegistry()

    external = source_key is not None
    if source_key is None:
        source_key = gen_source_key(params, rng, epoch)
    elif source_key.params != params:
        raise ValueError("source key was generated for different protocol parameters")
    registry.claim(source_key, epoch, external)

    inputs = cfg.inputs
    if inputs is None:
        inputs = tuple(sample_uniform(params.ring, rng) for _ in params.users)

    events: list[Event] = []

    def emit(kind, sender, receiver, v: RingVector):
        events.append(Event(kind, len(events), sender, receiver, v.hex()))

    keys = derive_keys(source_key)
    users = {}
    for k, w, key in zip(params.users, inputs, keys):
        users[k] = UserState(k, params, w, key, epoch)
        emit("input", k, k, w)
    for key in keys:
        emit("key", DEALER, key.owner, key.mask)

    outbox = {}
    for k, u in users.items():
        try:
            outbox[k] = u.make_message()
        except ProtocolError as exc:
            raise SimulationError(k, exc) from exc
        emit("broadcast", k, ALL, outbox[k].payload)

    for s, r in delivery_schedule(params.K, cfg.delivery_order, rng):
        m = outbox[s]
        if fault is not None:
            m = fault(m, r)
            if m is None:
                continue
        try:
            users[r].accept_message(m)
        except ProtocolError as exc:
            raise SimulationError(r, exc) from exc
        emit("deliver", s, r, m.payload)

    for k, u in users.items():
        try:
            res = u.recover_sum()
        except NotReadyError as exc:
            raise LivenessError(k, exc) from exc
        except ProtocolError as exc:
            raise SimulationError(k, exc) from exc
        emit("result", k, k, res.value)

    return Transcript(_header(cfg, "external" if external else "seed"), tuple(events))


def replay(transcript: Transcript | str) -> bool:
    """Re-run from the embedded config; True iff every record matches."""
    if isinstance(transcript, str):
        transcript = Transcript.from_text(transcript)
    try:
        cfg = transcript.config()
        src = None
        if transcript.header["key_source"] == "external":
            masks = transcript.keys()
            noise = tuple(masks[k] for k in range(1, cfg.params.K))
            src = SourceKey(cfg.params, noise, cfg.run_epoch)
        fresh = run_simulation(cfg, source_key=src)
    except (ValueError, KeyError, ProtocolError, SimulationError, KeyReuseError):
        return False
    return fresh.header == transcript.header and fresh.events == transcript.events


def exit_status(transcript: Transcript) -> int:
    return 0 if transcript.agreement() else 1


def run_batch(configs: Iterable[SimConfig], workers: int | None = None) -> list[Transcript]:
    """Run independent simulations, optionally in worker processes; order is preserved."""
    configs = list(configs)
    if workers is None or workers <= 1:
        return [run_simulation(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_simulation, configs))


def plaintext_sum(inputs: Sequence[RingVector]) -> RingVector:
    """Independent reference for the aggregate, computed coordinate-wise."""
    params = inputs[0].params
    return RingVector(
        params,
        tuple(sum(w.coords[i] for w in inputs) % params.q for i in range(params.L)),
    )
