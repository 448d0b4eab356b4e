"""Per-user state machine for one aggregation round.

A user masks its input with its key, broadcasts the result, collects the
other ``K - 1`` broadcasts and adds everything up. Because the masks sum to
zero, what remains is the plain sum of all inputs.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from .algebra import DimensionError, RingParams, RingVector, add, sum_all
from .keying import IndividualKey, ProtocolParams

MAGIC = b"DSA1"
_WIRE_HEADER = struct.Struct("<4sQHQI")  # magic, epoch, sender, q, L


class ProtocolError(RuntimeError):
    pass


class StateError(ProtocolError):
    """Operation not allowed in the current phase (e.g. sending twice)."""


class DuplicateMessageError(ProtocolError):
    pass


class RoutingError(ProtocolError):
    """Message addressed from self or from a user outside [1, K]."""


class StaleMessageError(ProtocolError):
    """Message carries a different epoch than the receiving user."""


class NotReadyError(ProtocolError):
    """Recovery attempted before all K-1 peer messages arrived."""


class WireFormatError(ValueError):
    pass


class Phase(enum.Enum):
    IDLE = "idle"
    SENT = "sent"
    RECOVERED = "recovered"


def mask_input(w: RingVector, z: RingVector) -> RingVector:
    """The broadcast for input ``w`` under key ``z``."""
    return add(w, z)


@dataclass(frozen=True)
class Message:
    sender: int
    epoch: int
    payload: RingVector

    @property
    def bits(self) -> float:
        return self.payload.params.bits

    def encode(self) -> bytes:
        p = self.payload.params
        return _WIRE_HEADER.pack(MAGIC, self.epoch, self.sender, p.q, p.L) + self.payload.to_bytes()

    @classmethod
    def decode(cls, data: bytes) -> "Message":
        if len(data) < _WIRE_HEADER.size:
            raise WireFormatError(f"message too short: {len(data)} bytes")
        magic, epoch, sender, q, L = _WIRE_HEADER.unpack_from(data)
        if magic != MAGIC:
            raise WireFormatError(f"bad magic {magic!r}")
        body = data[_WIRE_HEADER.size :]
        if len(body) != 8 * L:
            raise WireFormatError(f"payload length {len(body)} does not match L={L}")
        try:
            payload = RingVector.from_bytes(RingParams(q, L), body)
        except ValueError as exc:
            raise WireFormatError(str(exc)) from exc
        return cls(sender, epoch, payload)


@dataclass(frozen=True)
class AggregateResult:
    value: RingVector
    recovered_by: int


@dataclass
class UserState:
    user_id: int
    params: ProtocolParams
    input: RingVector
    key: IndividualKey
    epoch: int = 0
    inbox: dict[int, Message] = field(default_factory=dict)
    phase: Phase = Phase.IDLE

    def __post_init__(self):
        if self.user_id not in self.params.users:
            raise RoutingError(f"user id {self.user_id} outside [1, {self.params.K}]")
        if self.key.owner != self.user_id:
            raise ValueError(f"key owned by user {self.key.owner}, not {self.user_id}")
        ring = self.params.ring
        if self.input.params != ring or self.key.mask.params != ring:
            raise DimensionError(f"input and key must live in {ring}")

    def make_message(self) -> Message:
        if self.phase is not Phase.IDLE:
            raise StateError(
                f"user {self.user_id} already broadcast in epoch {self.epoch}; "
                "a key may mask only one message"
            )
        msg = Message(self.user_id, self.epoch, mask_input(self.input, self.key.mask))
        self.phase = Phase.SENT
        return msg

    def accept_message(self, m: Message) -> "UserState":
        if self.phase is Phase.RECOVERED:
            raise StateError(f"user {self.user_id} already recovered the sum")
        if m.sender == self.user_id:
            raise RoutingError(f"user {self.user_id} received its own message")
        if m.sender not in self.params.users:
            raise RoutingError(f"sender {m.sender} outside [1, {self.params.K}]")
        if m.epoch != self.epoch:
            raise StaleMessageError(
                f"message from user {m.sender} has epoch {m.epoch}, expected {self.epoch}"
            )
        if m.sender in self.inbox:
            raise DuplicateMessageError(f"second message from user {m.sender}")
        if m.payload.params != self.params.ring:
            raise DimensionError(f"payload in {m.payload.params}, expected {self.params.ring}")
        self.inbox[m.sender] = m
        return self

    def recover_sum(self) -> AggregateResult:
        if self.phase is not Phase.SENT:
            raise StateError(f"user {self.user_id} cannot recover in phase {self.phase.value}")
        missing = sorted(set(self.params.users) - {self.user_id} - set(self.inbox))
        if missing:
            raise NotReadyError(f"user {self.user_id} still waiting for users {missing}")
        own = mask_input(self.input, self.key.mask)
        total = sum_all([own] + [self.inbox[i].payload for i in sorted(self.inbox)])
        self.phase = Phase.RECOVERED
        return AggregateResult(total, self.user_id)
