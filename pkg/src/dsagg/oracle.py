"""Exact joint distributions of protocol variables by exhaustive enumeration.

A *world* is one assignment of every user input and every source-key noise
vector. Inputs and noise are uniform and independent, so every world has the
same weight and a joint distribution is just a table of integer counts.
Entropies are computed from those counts in bits; independence is decided
by an integer identity on the counts, never by comparing floats.

Worlds are enumerated in numpy chunks. The scheme's key derivation and
message map are evaluated once per distinct argument into lookup tables,
so the enumeration exercises the real scheme code without calling it per
world.
"""

from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Callable, Hashable, Iterable, NamedTuple, Sequence

import numpy as np

from .algebra import RingVector
from .keying import ProtocolParams, derive_masks
from .protocol import mask_input

DEFAULT_BUDGET = 2**24
CHUNK = 2**18

ColumnKey = tuple


class BudgetExceededError(RuntimeError):
    def __init__(self, required: int, budget: int):
        super().__init__(
            f"enumeration needs {required} worlds "
            f"(2^{math.log2(required):.1f}) but the budget is {budget}"
        )
        self.required = required
        self.budget = budget


class UnknownVariableError(KeyError):
    pass


def default_budget() -> int:
    env = os.environ.get("DSA_BUDGET")
    return int(env) if env else DEFAULT_BUDGET


@dataclass(frozen=True)
class Scheme:
    """A key-derivation map plus a message map, audited as a black box.

    ``derive(params, noise)`` turns the dealer's noise vectors into K masks;
    ``message(k, w, z)`` is user k's broadcast for input w and mask z.
    """

    name: str
    noise_count: Callable[[ProtocolParams], int]
    derive: Callable[[ProtocolParams, tuple[RingVector, ...]], Sequence[RingVector]]
    message: Callable[[int, RingVector, RingVector], RingVector]


OPTIMAL = Scheme(
    "optimal",
    noise_count=lambda p: p.K - 1,
    derive=lambda p, noise: derive_masks(noise),
    message=lambda k, w, z: mask_input(w, z),
)


def world_count(params: ProtocolParams, scheme: Scheme = OPTIMAL) -> int:
    """q^(K*L) input assignments times q^(S*L) noise assignments."""
    size = params.ring.size
    return size**params.K * size ** scheme.noise_count(params)


class World(NamedTuple):
    inputs: tuple[RingVector, ...]
    noise: tuple[RingVector, ...]
    keys: tuple[RingVector, ...]
    messages: tuple[RingVector, ...]


@dataclass(frozen=True)
class VariableSpec:
    """A named function of the world.

    Built-in variables are backed by enumeration columns; ``extractor``
    variables are evaluated per world in Python and are only practical for
    small spaces.
    """

    name: str
    columns: tuple[ColumnKey, ...] = ()
    extractor: Callable[[World], Hashable] | None = None

    def __str__(self):
        return self.name


def input_var(k: int) -> VariableSpec:
    return VariableSpec(f"W{k}", (("W", k),))


def key_var(k: int) -> VariableSpec:
    return VariableSpec(f"Z{k}", (("Z", k),))


def message_var(k: int) -> VariableSpec:
    return VariableSpec(f"X{k}", (("X", k),))


def noise_var(i: int) -> VariableSpec:
    return VariableSpec(f"N{i}", (("N", i),))


def input_sum_var() -> VariableSpec:
    return VariableSpec("SumW", (("S",),))


def joint(*vs: VariableSpec, name: str | None = None) -> VariableSpec:
    if any(v.extractor is not None for v in vs):
        fns = [v.extractor or _column_getter(v) for v in vs]
        return VariableSpec(
            name or "(" + ",".join(v.name for v in vs) + ")",
            extractor=lambda w: tuple(f(w) for f in fns),
        )
    cols = tuple(dict.fromkeys(c for v in vs for c in v.columns))
    return VariableSpec(name or "(" + ",".join(v.name for v in vs) + ")", cols)


def collusion_var(S: Iterable[int]) -> VariableSpec:
    """The inputs and keys of every user in S."""
    S = sorted(S)
    return joint(
        *[v for i in S for v in (input_var(i), key_var(i))],
        name="C{" + ",".join(map(str, S)) + "}",
    )


def custom(name: str, fn: Callable[[World], Hashable]) -> VariableSpec:
    return VariableSpec(name, extractor=fn)


def _column_getter(v: VariableSpec) -> Callable[[World], Hashable]:
    def get(w: World):
        out = []
        for col in v.columns:
            tag = col[0]
            if tag == "W":
                out.append(w.inputs[col[1] - 1].coords)
            elif tag == "N":
                out.append(w.noise[col[1] - 1].coords)
            elif tag == "Z":
                out.append(w.keys[col[1] - 1].coords)
            elif tag == "X":
                out.append(w.messages[col[1] - 1].coords)
            else:
                q = w.inputs[0].params.q
                out.append(tuple(sum(c) % q for c in zip(*(x.coords for x in w.inputs))))
        return out[0] if len(out) == 1 else tuple(out)

    return get


class WorldSpace:
    """All (inputs, noise) assignments for a parameter point, uniformly weighted.

    World index layout: ``noise_index + noise_space * input_index`` where
    both indices are little-endian base-q^L digit strings.
    """

    def __init__(self, params: ProtocolParams, scheme: Scheme = OPTIMAL, budget: int | None = None):
        self.params = params
        self.scheme = scheme
        self.budget = default_budget() if budget is None else budget
        self.symbols = params.ring.size
        self.noise_count = scheme.noise_count(params)
        self.noise_space = self.symbols**self.noise_count
        self.input_space = self.symbols**params.K
        self.world_count = self.noise_space * self.input_space
        if self.world_count > self.budget:
            raise BudgetExceededError(self.world_count, self.budget)

    # vector <-> code, code = sum c_i q^i
    @cached_property
    def _digits(self) -> np.ndarray:
        q, L = self.params.ring.q, self.params.ring.L
        codes = np.arange(self.symbols, dtype=np.int64)
        return np.stack([(codes // q**i) % q for i in range(L)], axis=1)

    @cached_property
    def _powers(self) -> np.ndarray:
        q, L = self.params.ring.q, self.params.ring.L
        return np.array([q**i for i in range(L)], dtype=np.int64)

    def vector(self, code: int) -> RingVector:
        return RingVector(self.params.ring, tuple(int(c) for c in self._digits[code]))

    def _noise(self, j: int) -> tuple[RingVector, ...]:
        out = []
        for _ in range(self.noise_count):
            j, d = divmod(j, self.symbols)
            out.append(self.vector(d))
        return tuple(out)

    @cached_property
    def _key_tables(self):
        """(key_values, table): table[j, k-1] is the code of user k's key under noise j."""
        values: dict[RingVector, int] = {}
        table = np.empty((self.noise_space, self.params.K), dtype=np.int64)
        for j in range(self.noise_space):
            masks = tuple(self.scheme.derive(self.params, self._noise(j)))
            if len(masks) != self.params.K:
                raise ValueError(f"scheme {self.scheme.name} derived {len(masks)} keys, expected {self.params.K}")
            for k, z in enumerate(masks):
                table[j, k] = values.setdefault(z, len(values))
        return list(values), table

    @cached_property
    def _message_tables(self):
        """(msg_values, tables): tables[k-1][w_code, z_code] is the code of X_k."""
        key_values, key_table = self._key_tables
        values: dict[RingVector, int] = {}
        tables = []
        for k in self.params.users:
            t = np.full((self.symbols, len(key_values)), -1, dtype=np.int64)
            for zc in np.unique(key_table[:, k - 1]):
                z = key_values[zc]
                for wc in range(self.symbols):
                    x = self.scheme.message(k, self.vector(wc), z)
                    t[wc, zc] = values.setdefault(x, len(values))
            tables.append(t)
        return list(values), tables

    def radix(self, col: ColumnKey) -> int | None:
        tag = col[0]
        if tag in ("W", "N", "S"):
            return self.symbols
        if tag == "Z":
            return len(self._key_tables[0])
        if tag == "X":
            return len(self._message_tables[0])
        return None

    def decoder(self, col: ColumnKey) -> Callable[[int], Hashable]:
        tag = col[0]
        if tag in ("W", "N", "S"):
            return lambda c: self.vector(c).coords
        if tag == "Z":
            vals = self._key_tables[0]
            return lambda c: vals[c].coords
        if tag == "X":
            vals = self._message_tables[0]
            return lambda c: vals[c].coords
        raise ValueError(f"no decoder for column {col}")

    def world(self, index: int) -> World:
        j, rest = index % self.noise_space, index // self.noise_space
        inputs = []
        for _ in self.params.users:
            rest, d = divmod(rest, self.symbols)
            inputs.append(self.vector(d))
        key_values, key_table = self._key_tables
        msg_values, msg_tables = self._message_tables
        keys = tuple(key_values[c] for c in key_table[j])
        msgs = tuple(
            msg_values[msg_tables[k][self._code(inputs[k]), key_table[j, k]]]
            for k in range(self.params.K)
        )
        return World(tuple(inputs), self._noise(j), keys, msgs)

    def _code(self, v: RingVector) -> int:
        return int(np.dot(v.coords, self._powers))

    def __iter__(self):
        for i in range(self.world_count):
            yield self.world(i)

    def _chunk_columns(self, start: int, stop: int, columns: Sequence[ColumnKey], custom_codes) -> np.ndarray:
        idx = np.arange(start, stop, dtype=np.int64)
        noise_idx = idx % self.noise_space
        rest = idx // self.noise_space
        w = []
        for _ in self.params.users:
            w.append(rest % self.symbols)
            rest = rest // self.symbols
        cache: dict = {}

        def keycodes():
            if "Z" not in cache:
                cache["Z"] = self._key_tables[1][noise_idx]
            return cache["Z"]

        out = np.empty((len(idx), len(columns)), dtype=np.int64)
        for c, col in enumerate(columns):
            tag = col[0]
            if tag == "W":
                out[:, c] = w[col[1] - 1]
            elif tag == "N":
                out[:, c] = (noise_idx // self.symbols ** (col[1] - 1)) % self.symbols
            elif tag == "Z":
                out[:, c] = keycodes()[:, col[1] - 1]
            elif tag == "X":
                k = col[1] - 1
                out[:, c] = self._message_tables[1][k][w[k], keycodes()[:, k]]
            elif tag == "S":
                q = self.params.ring.q
                total = sum(self._digits[wk] for wk in w) % q
                out[:, c] = total @ self._powers
            else:
                fn, codes = custom_codes[col]
                out[:, c] = [codes.setdefault(fn(self.world(int(i))), len(codes)) for i in idx]
        return out


def _group(rows: np.ndarray, counts: np.ndarray, radices: Sequence[int | None]):
    """Merge identical rows, summing their counts exactly."""
    if rows.shape[1] == 0:
        return rows[:1], np.array([counts.sum()], dtype=np.int64)
    if all(r is not None for r in radices) and math.prod(radices) < 2**62:
        mult = np.cumprod([1] + list(radices[:-1]), dtype=np.int64)
        key = rows @ mult
        order = np.argsort(key, kind="stable")
        sk = key[order]
        starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
    else:
        order = np.lexsort(rows.T[::-1])
        sr = rows[order]
        starts = np.flatnonzero(np.r_[True, np.any(sr[1:] != sr[:-1], axis=1)])
    summed = np.add.reduceat(counts[order], starts)
    return rows[order[starts]], summed.astype(np.int64)


def _entropy_of_counts(counts: np.ndarray, total: int) -> float:
    # group equal counts so the sum has few terms and is order-independent
    vals, mult = np.unique(counts, return_counts=True)
    s = math.fsum(int(m) * int(c) * math.log2(int(c)) for c, m in zip(vals, mult))
    return math.log2(total) - s / total


@dataclass(frozen=True, eq=False)
class JointDistribution:
    variables: tuple[VariableSpec, ...]
    columns: tuple[ColumnKey, ...]
    rows: np.ndarray
    counts: np.ndarray
    total: int
    radices: tuple[int | None, ...]
    decoders: tuple[Callable[[int], Hashable], ...]

    def variable(self, ref: str | VariableSpec) -> VariableSpec:
        for v in self.variables:
            if v == ref or v.name == ref:
                return v
        # a built-in composite is fine as long as its columns were tabulated
        if isinstance(ref, VariableSpec) and ref.extractor is None and ref.columns:
            if all(c in self.columns for c in ref.columns):
                return ref
        raise UnknownVariableError(f"{ref} is not a variable of this distribution")

    def _columns_of(self, refs: Iterable[str | VariableSpec]) -> list[int]:
        if isinstance(refs, (str, VariableSpec)):
            refs = [refs]
        idx = set()
        for r in refs:
            v = self.variable(r)
            cols = v.columns if v.extractor is None else (("custom", v.name),)
            idx.update(self.columns.index(c) for c in cols)
        return sorted(idx)

    def _marginal(self, idx: Sequence[int]):
        return _group(self.rows[:, idx], self.counts, [self.radices[i] for i in idx])

    @cached_property
    def _cols(self) -> list[np.ndarray]:
        return [np.ascontiguousarray(self.rows[:, i]) for i in range(self.rows.shape[1])]

    def _key(self, idx: Sequence[int]):
        """Mixed-radix code of columns ``idx`` (first column lowest) and its range, or (None, None)."""
        rad = [self.radices[i] for i in idx]
        if any(r is None for r in rad) or math.prod(rad) >= 2**62:
            return None, None
        key = np.zeros(len(self.counts), dtype=np.int64)
        for i in reversed(idx):
            key *= self.radices[i]
            key += self._cols[i]
        return key, math.prod(rad)

    def _tally(self, idx: Sequence[int]):
        """(distinct keys, summed counts) over columns ``idx``, or None if not keyable."""
        key, size = self._key(idx)
        if key is None:
            return None
        if size <= max(2**16, 2 * len(key)) and self.total < 2**53:
            dense = np.bincount(key, weights=self.counts, minlength=size).astype(np.int64)
            nz = np.flatnonzero(dense)
            return nz, dense[nz]
        order = np.argsort(key, kind="stable")
        sk = key[order]
        starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
        return sk[starts], np.add.reduceat(self.counts[order], starts).astype(np.int64)

    def _support_counts(self, idx: Sequence[int]) -> np.ndarray:
        if not idx:
            return np.array([self.total], dtype=np.int64)
        t = self._tally(idx)
        return t[1] if t is not None else self._marginal(idx)[1]

    def counts_of(self, targets) -> np.ndarray:
        """Counts of each value in the support of ``targets`` (order unspecified)."""
        return self._support_counts(self._columns_of(_as_list(targets)))

    def _h(self, idx: Sequence[int]) -> float:
        if not idx:
            return 0.0
        return _entropy_of_counts(self._support_counts(idx), self.total)

    def _value(self, row, v: VariableSpec):
        cols = v.columns if v.extractor is None else (("custom", v.name),)
        vals = []
        for c in cols:
            i = self.columns.index(c)
            vals.append(self.decoders[i](int(row[i])))
        return vals[0] if len(vals) == 1 else tuple(vals)

    def marginal(self, targets) -> dict:
        """Value -> count for the given variables (a tuple of values if several)."""
        if isinstance(targets, (str, VariableSpec)):
            targets = [targets]
        vs = [self.variable(t) for t in targets]
        idx = self._columns_of(vs)
        rows, counts = self._marginal(idx)
        full = np.zeros((len(rows), len(self.columns)), dtype=np.int64)
        full[:, idx] = rows
        out: Counter = Counter()
        for row, c in zip(full, counts):
            vals = tuple(self._value(row, v) for v in vs)
            out[vals[0] if len(vs) == 1 else vals] += int(c)
        return dict(out)

    def as_dict(self) -> dict:
        return self.marginal(self.variables)

    def probability(self, targets, value) -> Fraction:
        return Fraction(self.marginal(targets).get(value, 0), self.total)

    def dump(self) -> str:
        """Tab-separated value/count table, sorted by value."""
        lines = ["\t".join(v.name for v in self.variables) + "\tcount"]
        for value, c in sorted(self.as_dict().items(), key=lambda kv: repr(kv[0])):
            value = value if len(self.variables) > 1 else (value,)
            lines.append("\t".join(repr(x) for x in value) + f"\t{c}")
        return "\n".join(lines) + "\n"


def tabulate(
    space: WorldSpace,
    variables: Sequence[VariableSpec],
    chunk_size: int = CHUNK,
) -> JointDistribution:
    variables = tuple(variables)
    columns: list[ColumnKey] = []
    custom_codes = {}
    for v in variables:
        if v.extractor is not None:
            col = ("custom", v.name)
            custom_codes[col] = (v.extractor, {})
            cols = (col,)
        else:
            cols = v.columns
        for c in cols:
            if c not in columns:
                columns.append(c)

    radices = [space.radix(c) for c in columns]
    parts_rows, parts_counts = [], []
    for start in range(0, space.world_count, chunk_size):
        stop = min(start + chunk_size, space.world_count)
        block = space._chunk_columns(start, stop, columns, custom_codes)
        r, c = _group(block, np.ones(len(block), dtype=np.int64), radices)
        parts_rows.append(r)
        parts_counts.append(c)
    rows, counts = _group(np.concatenate(parts_rows), np.concatenate(parts_counts), radices)

    decoders = []
    for c in columns:
        if c[0] == "custom":
            inverse = {code: val for val, code in custom_codes[c][1].items()}
            decoders.append(inverse.__getitem__)
        else:
            decoders.append(space.decoder(c))
    return JointDistribution(
        variables, tuple(columns), rows, counts, space.world_count, tuple(radices), tuple(decoders)
    )


def _as_list(refs) -> list:
    if refs is None:
        return []
    if isinstance(refs, (str, VariableSpec)):
        return [refs]
    return list(refs)


def entropy_bits(d: JointDistribution, targets, given=()) -> float:
    """H(targets | given) in bits."""
    t = d._columns_of(_as_list(targets))
    g = d._columns_of(_as_list(given))
    return d._h(sorted(set(t) | set(g))) - d._h(g)


def conditional_mi_bits(d: JointDistribution, a, b, given=()) -> float:
    """I(a; b | given) in bits."""
    A = set(d._columns_of(_as_list(a)))
    B = set(d._columns_of(_as_list(b)))
    G = set(d._columns_of(_as_list(given)))
    return (
        d._h(sorted(A | G)) + d._h(sorted(B | G)) - d._h(sorted(A | B | G)) - d._h(sorted(G))
    )


def conditional_mi_is_zero(d: JointDistribution, a, b, given=()) -> bool:
    """Exact test of I(a; b | given) == 0 on integer counts.

    Holds iff every cell satisfies count(a,b,g) * count(g) == count(a,g) * count(b,g),
    including cells of zero count.
    """
    A = set(d._columns_of(_as_list(a)))
    B = set(d._columns_of(_as_list(b)))
    G = sorted(d._columns_of(_as_list(given)))
    Ar, Br = sorted(A - set(G)), sorted(B - set(G))
    ABr = sorted(set(Ar) | set(Br))
    # conditioning columns come first, so a key's g-part is key % size_g
    k_abg = d._key(G + ABr)[0]
    if k_abg is None:
        return _mi_is_zero_rows(d, A, B, set(G))
    size_g = math.prod(d.radices[i] for i in G)
    k_g = d._key(G)[0] if G else np.zeros(len(d.counts), dtype=np.int64)
    k_ag = d._key(G + Ar)[0]
    k_bg = d._key(G + Br)[0]

    def lookup(key, idx):
        if not idx:
            return np.zeros(1, dtype=np.int64), np.full(len(key), d.total, dtype=np.int64)
        uniq, sums = d._tally(idx)
        if uniq[-1] < 2 * len(uniq) + 2**16:
            dense = np.zeros(int(uniq[-1]) + 1, dtype=np.int64)
            dense[uniq] = sums
            return uniq, dense[key]
        return uniq, sums[np.searchsorted(uniq, key)]

    _, n_g = lookup(k_g, G)
    u_ag, n_ag = lookup(k_ag, G + Ar)
    u_bg, n_bg = lookup(k_bg, G + Br)
    u_abg, n_abg = lookup(k_abg, G + ABr)
    if d.total < 2**31:
        ok = np.array_equal(n_abg * n_g, n_ag * n_bg)
    else:
        ok = all(int(x) * int(y) == int(u) * int(v) for x, y, u, v in zip(n_abg, n_g, n_ag, n_bg))
    if not ok:
        return False
    # every (a, b) pair seen under g must actually occur under g
    mg = max(size_g, 1)
    da = np.unique(u_ag % mg, return_counts=True)
    db = np.unique(u_bg % mg, return_counts=True)
    dc = np.unique(u_abg % mg, return_counts=True)
    return (
        np.array_equal(da[0], dc[0])
        and np.array_equal(db[0], dc[0])
        and np.array_equal(da[1] * db[1], dc[1])
    )


def _dense_ids(rows: np.ndarray, counts: np.ndarray, sub: Sequence[int]):
    if not sub:
        return np.zeros(len(rows), dtype=np.int64), np.array([counts.sum()], dtype=object)
    _, ids = np.unique(rows[:, sub], axis=0, return_inverse=True)
    ids = ids.reshape(-1)
    sums = np.zeros(ids.max() + 1, dtype=object)
    np.add.at(sums, ids, counts.astype(object))
    return ids, sums


def _mi_is_zero_rows(d: JointDistribution, A: set, B: set, G: set) -> bool:
    """Row-based fallback when the column codes do not fit one machine word."""
    full = sorted(A | B | G)
    rows, counts = d._marginal(full)
    pos = {c: i for i, c in enumerate(full)}

    def sub(cols):
        return sorted(pos[c] for c in cols)

    g_id, n_g = _dense_ids(rows, counts, sub(G))
    ag_id, n_ag = _dense_ids(rows, counts, sub(A | G))
    bg_id, n_bg = _dense_ids(rows, counts, sub(B | G))
    if not np.all(counts.astype(object) * n_g[g_id] == n_ag[ag_id] * n_bg[bg_id]):
        return False
    distinct_a = np.bincount(g_id[np.unique(ag_id, return_index=True)[1]], minlength=len(n_g))
    distinct_b = np.bincount(g_id[np.unique(bg_id, return_index=True)[1]], minlength=len(n_g))
    cells = np.bincount(g_id, minlength=len(n_g))
    return bool(np.all(distinct_a * distinct_b == cells))


def brute_force_counts(params: ProtocolParams, fn: Callable[..., Hashable], scheme: Scheme = OPTIMAL) -> Counter:
    """Tally ``fn(inputs, keys, messages)`` over every world with plain loops.

    Kept free of numpy and lookup tables so it can cross-check :func:`tabulate`.
    """
    ring = params.ring
    vectors = [RingVector(ring, c) for c in product(range(ring.q), repeat=ring.L)]
    tally: Counter = Counter()
    n = scheme.noise_count(params)
    for noise in product(vectors, repeat=n):
        keys = tuple(scheme.derive(params, noise))
        for inputs in product(vectors, repeat=params.K):
            msgs = tuple(scheme.message(k, w, z) for k, w, z in zip(params.users, inputs, keys))
            tally[fn(inputs, keys, msgs)] += 1
    return tally
