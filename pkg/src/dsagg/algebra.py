"""Additive group arithmetic on fixed-length vectors over Z_q.

Everything the protocol moves around (inputs, keys, messages) is a
:class:`RingVector`. Only addition and negation are provided; the
aggregation scheme never multiplies.
"""

from __future__ import annotations

import math
import random
import secrets
import struct
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

MAX_MODULUS = 2**32

_SYMBOL = struct.Struct("<Q")


class DimensionError(ValueError):
    """Operands live in different rings (modulus or length differ)."""


class ArityError(ValueError):
    """An operation received the wrong number of operands."""


class RandomSource(Protocol):
    def randrange(self, stop: int) -> int: ...


def make_rng(seed: int | None = None) -> RandomSource:
    """Return the test-profile PRNG for a seed, or a CSPRNG when seed is None.

    The seeded generator is :class:`random.Random` (MT19937), which is
    reproducible across runs and platforms but must not be used for real
    key material.
    """
    if seed is None:
        return secrets.SystemRandom()
    return random.Random(seed)


@dataclass(frozen=True)
class RingParams:
    q: int
    L: int

    def __post_init__(self):
        if not isinstance(self.q, int) or self.q < 2:
            raise ValueError(f"modulus q must be an integer >= 2, got {self.q!r}")
        if self.q > MAX_MODULUS:
            raise ValueError(f"modulus q must be <= 2**32, got {self.q}")
        if not isinstance(self.L, int) or self.L < 1:
            raise ValueError(f"vector length L must be a positive integer, got {self.L!r}")

    @property
    def bits_per_symbol(self) -> float:
        return math.log2(self.q)

    @property
    def bits(self) -> float:
        """Exact (possibly non-integral) information size of one vector."""
        return self.L * math.log2(self.q)

    @property
    def size(self) -> int:
        """Number of distinct vectors, q**L."""
        return self.q**self.L


@dataclass(frozen=True)
class RingVector:
    params: RingParams
    coords: tuple[int, ...]

    def __post_init__(self):
        coords = tuple(int(c) for c in self.coords)
        if len(coords) != self.params.L:
            raise DimensionError(
                f"expected {self.params.L} coordinates, got {len(coords)}"
            )
        q = self.params.q
        for c in coords:
            if not 0 <= c < q:
                raise ValueError(f"coordinate {c} outside [0, {q})")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def of(cls, q: int, coords: Iterable[int]) -> "RingVector":
        coords = tuple(coords)
        return cls(RingParams(q, len(coords)), coords)

    @classmethod
    def zero(cls, params: RingParams) -> "RingVector":
        return cls(params, (0,) * params.L)

    def is_zero(self) -> bool:
        return not any(self.coords)

    def __add__(self, other: "RingVector") -> "RingVector":
        return add(self, other)

    def __neg__(self) -> "RingVector":
        return neg(self)

    def __sub__(self, other: "RingVector") -> "RingVector":
        return add(self, neg(other))

    def __iter__(self):
        return iter(self.coords)

    def __len__(self):
        return len(self.coords)

    def __repr__(self):
        return f"RingVector(q={self.params.q}, {list(self.coords)})"

    def to_bytes(self) -> bytes:
        """Symbols as consecutive 8-byte little-endian words."""
        return b"".join(_SYMBOL.pack(c) for c in self.coords)

    @classmethod
    def from_bytes(cls, params: RingParams, data: bytes) -> "RingVector":
        if len(data) != 8 * params.L:
            raise DimensionError(
                f"need {8 * params.L} bytes for L={params.L}, got {len(data)}"
            )
        return cls(params, tuple(v for (v,) in _SYMBOL.iter_unpack(data)))

    def hex(self) -> str:
        return self.to_bytes().hex()


def _check_same(a: RingVector, b: RingVector) -> None:
    if a.params != b.params:
        raise DimensionError(f"ring mismatch: {a.params} vs {b.params}")


def add(a: RingVector, b: RingVector) -> RingVector:
    _check_same(a, b)
    q = a.params.q
    return RingVector(a.params, tuple((x + y) % q for x, y in zip(a.coords, b.coords)))


def neg(a: RingVector) -> RingVector:
    q = a.params.q
    return RingVector(a.params, tuple((q - x) % q for x in a.coords))


def sum_all(vs: Sequence[RingVector]) -> RingVector:
    vs = list(vs)
    if not vs:
        raise ArityError("sum_all needs at least one vector")
    params = vs[0].params
    acc = [0] * params.L
    for v in vs:
        if v.params != params:
            raise DimensionError(f"ring mismatch: {params} vs {v.params}")
        for i, c in enumerate(v.coords):
            acc[i] += c
    return RingVector(params, tuple(c % params.q for c in acc))


def sample_uniform(params: RingParams, rng: RandomSource) -> RingVector:
    return RingVector(params, tuple(rng.randrange(params.q) for _ in range(params.L)))
