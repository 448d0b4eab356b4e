"""Dealer-side key material.

A trusted dealer draws ``K - 1`` independent uniform vectors and hands user
``k < K`` the k-th one; user ``K`` gets the negated sum of all of them. The
masks therefore cancel in the aggregate while any ``K - 1`` of them are
jointly uniform.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .algebra import (
    ArityError,
    DimensionError,
    RandomSource,
    RingParams,
    RingVector,
    neg,
    sample_uniform,
    sum_all,
)

TRIVIAL_REGIME_MESSAGE = (
    "no meaningful security is possible when K = 2 or T >= K - 2: "
    "the sum then reveals the single remaining unknown input"
)


class TrivialRegimeError(ValueError):
    """(K, T) lies in the regime where the sum itself discloses an input."""


def trivial_regime_reason(K: int, T: int) -> str | None:
    """Why (K, T) is outside the nontrivial regime, or None if it is inside."""
    if K == 2:
        return f"K=2: {TRIVIAL_REGIME_MESSAGE}"
    if K < 2:
        return f"K={K}: at least 3 users are required"
    if T >= K - 2:
        return f"T={T} >= K-2={K - 2}: {TRIVIAL_REGIME_MESSAGE}"
    return None


@dataclass(frozen=True)
class ProtocolParams:
    K: int
    T: int
    ring: RingParams

    def __post_init__(self):
        if not isinstance(self.K, int) or not isinstance(self.T, int):
            raise TypeError("K and T must be integers")
        if self.T < 0:
            raise ValueError(f"collusion threshold must be >= 0, got {self.T}")
        reason = trivial_regime_reason(self.K, self.T)
        if reason is not None:
            raise TrivialRegimeError(reason)

    @classmethod
    def make(cls, K: int, T: int = 0, q: int = 2, L: int = 1) -> "ProtocolParams":
        return cls(K, T, RingParams(q, L))

    @property
    def users(self) -> range:
        return range(1, self.K + 1)

    @property
    def source_key_bits(self) -> float:
        return (self.K - 1) * self.ring.bits


@dataclass(frozen=True)
class SourceKey:
    params: ProtocolParams
    noise: tuple[RingVector, ...]
    epoch: int = 0

    def __post_init__(self):
        noise = tuple(self.noise)
        if len(noise) != self.params.K - 1:
            raise ArityError(
                f"source key needs K-1={self.params.K - 1} noise vectors, got {len(noise)}"
            )
        for n in noise:
            if n.params != self.params.ring:
                raise DimensionError(f"noise vector in {n.params}, expected {self.params.ring}")
        object.__setattr__(self, "noise", noise)

    @property
    def bits(self) -> float:
        return len(self.noise) * self.params.ring.bits

    def fingerprint(self) -> bytes:
        return b"".join(n.to_bytes() for n in self.noise)


@dataclass(frozen=True)
class IndividualKey:
    owner: int
    mask: RingVector


def gen_source_key(params: ProtocolParams, rng: RandomSource, epoch: int = 0) -> SourceKey:
    noise = tuple(sample_uniform(params.ring, rng) for _ in range(params.K - 1))
    return SourceKey(params, noise, epoch)


def derive_masks(noise: Sequence[RingVector]) -> tuple[RingVector, ...]:
    """Masks for K = len(noise) + 1 users: the noise itself, then its negated sum."""
    noise = tuple(noise)
    return noise + (neg(sum_all(noise)),)


def derive_keys(src: SourceKey) -> tuple[IndividualKey, ...]:
    return tuple(
        IndividualKey(k, z) for k, z in enumerate(derive_masks(src.noise), start=1)
    )


def key_zero_sum_check(keys: Sequence[IndividualKey], expected: int | None = None) -> bool:
    keys = list(keys)
    if not keys:
        raise ArityError("no keys given")
    if expected is not None and len(keys) != expected:
        raise ArityError(f"expected {expected} keys, got {len(keys)}")
    return sum_all([k.mask for k in keys]).is_zero()


# Key file: one fixed-layout record per user, concatenated.
_KEY_HEADER = struct.Struct("<QHIQ")  # epoch, owner, L, q


class KeyFileError(ValueError):
    pass


def encode_key_record(key: IndividualKey, epoch: int) -> bytes:
    p = key.mask.params
    return _KEY_HEADER.pack(epoch, key.owner, p.L, p.q) + key.mask.to_bytes()


def decode_key_records(data: bytes) -> list[tuple[int, IndividualKey]]:
    out = []
    pos = 0
    while pos < len(data):
        if len(data) - pos < _KEY_HEADER.size:
            raise KeyFileError(f"truncated key record header at offset {pos}")
        epoch, owner, L, q = _KEY_HEADER.unpack_from(data, pos)
        pos += _KEY_HEADER.size
        body = data[pos : pos + 8 * L]
        if len(body) != 8 * L:
            raise KeyFileError(f"truncated key record body at offset {pos}")
        pos += 8 * L
        try:
            mask = RingVector.from_bytes(RingParams(q, L), body)
        except ValueError as exc:
            raise KeyFileError(str(exc)) from exc
        out.append((epoch, IndividualKey(owner, mask)))
    return out


def write_key_file(path: str | Path, keys: Sequence[IndividualKey], epoch: int) -> None:
    Path(path).write_bytes(b"".join(encode_key_record(k, epoch) for k in keys))


def read_key_file(path: str | Path) -> list[tuple[int, IndividualKey]]:
    return decode_key_records(Path(path).read_bytes())
