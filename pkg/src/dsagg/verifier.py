"""Executable checks of recovery, security and the rate lower bounds.

Every check tabulates the exact joint distribution of all inputs, keys,
messages and the input sum for one parameter point, then evaluates one
information quantity per user (and per colluding set where relevant).
Entropy (in)equalities are judged within ``TOL`` bits; independence claims
use the exact integer test from :mod:`dsagg.oracle`.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Callable, Iterator, Sequence

from .algebra import RingVector
from .keying import ProtocolParams, trivial_regime_reason
from .oracle import (
    OPTIMAL,
    JointDistribution,
    Scheme,
    WorldSpace,
    collusion_var,
    conditional_mi_bits,
    conditional_mi_is_zero,
    entropy_bits,
    input_sum_var,
    input_var,
    key_var,
    message_var,
    tabulate,
)

TOL = 1e-9


@dataclass(frozen=True)
class CollusionSet:
    observer: int
    members: frozenset[int]
    K: int

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if self.observer in self.members:
            raise ValueError("observer cannot collude with itself")
        if not self.members <= set(range(1, self.K + 1)):
            raise ValueError(f"members {sorted(self.members)} outside [1, {self.K}]")

    @property
    def complement(self) -> tuple[int, ...]:
        return tuple(i for i in range(1, self.K + 1) if i != self.observer and i not in self.members)

    def label(self) -> str:
        return f"k={self.observer},T={{{','.join(map(str, sorted(self.members)))}}}"


def collusion_sets(K: int, k: int, max_size: int) -> Iterator[CollusionSet]:
    """All colluding sets for observer k of size 0..max_size, in canonical order."""
    others = [i for i in range(1, K + 1) if i != k]
    for size in range(0, max_size + 1):
        for members in combinations(others, size):
            yield CollusionSet(k, frozenset(members), K)


@dataclass(frozen=True)
class RateTriple:
    R_X: float
    R_Z: float
    R_ZSigma: float

    def __iter__(self):
        return iter((self.R_X, self.R_Z, self.R_ZSigma))


@dataclass(frozen=True)
class InstanceResult:
    label: str
    measured: float
    bound: float | None
    passed: bool
    tight: bool | None = None


@dataclass
class CheckReport:
    name: str
    params: dict
    expected: str
    instances: list[InstanceResult] = field(default_factory=list)
    worlds: int = 0
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.instances) and all(i.passed for i in self.instances)

    @property
    def tight(self) -> bool:
        return all(i.tight is not False for i in self.instances)

    @property
    def measured(self) -> list[float]:
        return [i.measured for i in self.instances]

    def records(self) -> list[dict]:
        """One record per instance; runtime is left out so output is reproducible."""
        return [
            {
                "check": self.name,
                **self.params,
                "instance": inst.label,
                "expected": self.expected,
                "measured": round(inst.measured, 12),
                "bound": inst.bound,
                "tight": inst.tight,
                "pass": inst.passed,
                "worlds": self.worlds,
            }
            for inst in self.instances
        ]


def _params_dict(params: ProtocolParams, scheme: Scheme) -> dict:
    return {"K": params.K, "T": params.T, "q": params.ring.q, "L": params.ring.L, "scheme": scheme.name}


@lru_cache(maxsize=8)
def _full_distribution(params: ProtocolParams, scheme: Scheme, budget: int | None) -> JointDistribution:
    space = WorldSpace(params, scheme, budget)
    K = params.K
    variables = (
        [input_var(k) for k in range(1, K + 1)]
        + [key_var(k) for k in range(1, K + 1)]
        + [message_var(k) for k in range(1, K + 1)]
        + [input_sum_var()]
    )
    return tabulate(space, variables)


class _Check:
    def __init__(self, name, params, scheme, budget, expected):
        self.t0 = time.perf_counter()
        self.scheme = scheme or OPTIMAL
        self.d = _full_distribution(params, self.scheme, budget)
        self.report = CheckReport(name, _params_dict(params, self.scheme), expected, worlds=self.d.total)

    def add(self, label, measured, bound, passed, tight=None):
        self.report.instances.append(InstanceResult(label, measured, bound, bool(passed), tight))

    def done(self) -> CheckReport:
        self.report.runtime = time.perf_counter() - self.t0
        return self.report


def _W(S):
    return [input_var(i) for i in S]


def _Z(S):
    return [key_var(i) for i in S]


def _X(S):
    return [message_var(i) for i in S]


def _unit(params: ProtocolParams) -> float:
    """One input's worth of bits, L*log2(q)."""
    return params.ring.bits


def check_recovery(params: ProtocolParams, scheme: Scheme | None = None, budget: int | None = None) -> CheckReport:
    c = _Check("recovery", params, scheme, budget, "H(SumW | X_others, W_k, Z_k) = 0")
    for k in params.users:
        others = [i for i in params.users if i != k]
        given = _X(others) + [input_var(k), key_var(k)]
        h = entropy_bits(c.d, [input_sum_var()], given)
        # exact: each conditioning value pins down one sum
        n_given = len(c.d.counts_of(given))
        n_joint = len(c.d.counts_of(given + [input_sum_var()]))
        c.add(f"k={k}", h, 0.0, n_given == n_joint, tight=n_given == n_joint)
    return c.done()


def _security_instance(d: JointDistribution, params: ProtocolParams, cs: CollusionSet):
    k = cs.observer
    others = [i for i in params.users if i != k]
    given = [input_sum_var(), input_var(k), key_var(k)]
    if cs.members:
        given.append(collusion_var(cs.members))
    a, b = _X(others), _W(others)
    return conditional_mi_is_zero(d, a, b, given), conditional_mi_bits(d, a, b, given)


def check_security(
    params: ProtocolParams,
    scheme: Scheme | None = None,
    budget: int | None = None,
    threshold: int | None = None,
) -> CheckReport:
    """I(X_others; W_others | SumW, W_k, Z_k, C_T) = 0 for every k and |T| <= threshold."""
    c = _Check("security", params, scheme, budget, "I(X_others; W_others | SumW, W_k, Z_k, C_T) = 0 (exact)")
    T = params.T if threshold is None else threshold
    for k in params.users:
        for cs in collusion_sets(params.K, k, T):
            zero, mi = _security_instance(c.d, params, cs)
            c.add(cs.label(), mi, 0.0, zero, tight=zero)
    return c.done()


def measure_rates(params: ProtocolParams, scheme: Scheme | None = None) -> RateTriple:
    """Raw stored sizes of one message, one key and the source key, per input bit."""
    scheme = scheme or OPTIMAL
    ring = params.ring
    zero = RingVector.zero(ring)
    noise = tuple(zero for _ in range(scheme.noise_count(params)))
    keys = tuple(scheme.derive(params, noise))
    msgs = [scheme.message(k, zero, z) for k, z in zip(params.users, keys)]

    def ratio(vectors: Sequence[RingVector]) -> float:
        if not vectors:
            return 0.0
        v = max(vectors, key=lambda x: x.params.bits)
        if v.params.q == ring.q:
            return float(Fraction(v.params.L, ring.L))
        return v.params.bits / ring.bits

    return RateTriple(ratio(msgs), ratio(keys), float(scheme.noise_count(params)))


def check_rate_region(params: ProtocolParams, measured: RateTriple | None = None) -> CheckReport:
    if measured is None:
        measured = measure_rates(params)
    K = params.K
    bounds = (1.0, 1.0, float(K - 1))
    rep = CheckReport(
        "rate_region",
        {"K": K, "T": params.T, "q": params.ring.q, "L": params.ring.L},
        f"R_X >= 1, R_Z >= 1, R_ZSigma >= {K - 1}",
    )
    optimal = all(math.isclose(m, b, rel_tol=0, abs_tol=TOL) for m, b in zip(measured, bounds))
    for label, m, b in zip(("R_X", "R_Z", "R_ZSigma"), measured, bounds):
        rep.instances.append(InstanceResult(label, m, b, m >= b - TOL, math.isclose(m, b, rel_tol=0, abs_tol=TOL)))
    rep.params["optimal"] = optimal
    return rep


def is_optimal(report: CheckReport) -> bool:
    return bool(report.params.get("optimal"))


def check_lemma1(params: ProtocolParams, scheme: Scheme | None = None, budget: int | None = None) -> CheckReport:
    c = _Check("lemma1", params, scheme, budget, "H(X_k | C_others) >= L log2 q")
    bound = _unit(params)
    for k in params.users:
        others = [i for i in params.users if i != k]
        h = entropy_bits(c.d, [message_var(k)], [collusion_var(others)])
        c.add(f"k={k}", h, bound, h >= bound - TOL, abs(h - bound) <= TOL)
    return c.done()


def _admissible(params: ProtocolParams, k: int) -> Iterator[CollusionSet]:
    return collusion_sets(params.K, k, params.K - 3)


def check_corollary1(params: ProtocolParams, scheme: Scheme | None = None, budget: int | None = None) -> CheckReport:
    c = _Check("corollary1", params, scheme, budget, "H(X_Tbar | C_T, W_k, Z_k) >= |Tbar| L log2 q")
    for k in params.users:
        for cs in _admissible(params, k):
            bound = len(cs.complement) * _unit(params)
            h = entropy_bits(c.d, _X(cs.complement), [collusion_var(set(cs.members) | {k})])
            c.add(cs.label(), h, bound, h >= bound - TOL, abs(h - bound) <= TOL)
    return c.done()


def check_lemma2(params: ProtocolParams, scheme: Scheme | None = None, budget: int | None = None) -> CheckReport:
    c = _Check("lemma2", params, scheme, budget, "I(X_k; W_k | W_k', Z_k') = 0 (exact)")
    for k in params.users:
        for kp in params.users:
            if kp == k:
                continue
            a, b, g = [message_var(k)], [input_var(k)], [input_var(kp), key_var(kp)]
            zero = conditional_mi_is_zero(c.d, a, b, g)
            c.add(f"k={k},k'={kp}", conditional_mi_bits(c.d, a, b, g), 0.0, zero, zero)
    return c.done()


def check_lemma3(params: ProtocolParams, scheme: Scheme | None = None, budget: int | None = None) -> CheckReport:
    c = _Check("lemma3", params, scheme, budget, "I(X_Tbar; W_Tbar | C_T, W_k, Z_k) = L log2 q")
    target = _unit(params)
    for k in params.users:
        for cs in _admissible(params, k):
            mi = conditional_mi_bits(
                c.d, _X(cs.complement), _W(cs.complement), [collusion_var(set(cs.members) | {k})]
            )
            ok = abs(mi - target) <= TOL
            c.add(cs.label(), mi, target, ok, ok)
    return c.done()


def check_lemma4(params: ProtocolParams, scheme: Scheme | None = None, budget: int | None = None) -> CheckReport:
    c = _Check("lemma4", params, scheme, budget, "H(Z_Tbar | Z_T, Z_k) >= (K-2-|T|) L log2 q")
    for k in params.users:
        for cs in _admissible(params, k):
            bound = (params.K - 2 - len(cs.members)) * _unit(params)
            h = entropy_bits(c.d, _Z(cs.complement), _Z(sorted(set(cs.members) | {k})))
            c.add(cs.label(), h, bound, h >= bound - TOL, abs(h - bound) <= TOL)
    return c.done()


def check_source_key_entropy(
    params: ProtocolParams, scheme: Scheme | None = None, budget: int | None = None
) -> CheckReport:
    c = _Check("source_key", params, scheme, budget, "H(Z_1..Z_K) = (K-1) L log2 q (uniform support)")
    keys = _Z(params.users)
    target = (params.K - 1) * _unit(params)
    h = entropy_bits(c.d, keys)
    counts = c.d.counts_of(keys)
    exact = len(counts) == params.ring.size ** (params.K - 1) and len(set(counts.tolist())) == 1
    c.add("all keys", h, target, exact, exact)
    return c.done()


@dataclass(frozen=True)
class RegimeVerdict:
    accepted: bool
    reason: str


def reject_trivial_regime(K: int, T: int) -> RegimeVerdict:
    reason = trivial_regime_reason(K, T)
    if reason is None and T < 0:
        reason = "collusion threshold must be >= 0"
    return RegimeVerdict(reason is None, reason or "nontrivial regime: K >= 3 and T <= K-3")


CHECKS: dict[str, Callable[..., CheckReport]] = {
    "recovery": check_recovery,
    "security": check_security,
    "lemma1": check_lemma1,
    "corollary1": check_corollary1,
    "lemma2": check_lemma2,
    "lemma3": check_lemma3,
    "lemma4": check_lemma4,
    "source_key": check_source_key_entropy,
    "rates": lambda params, scheme=None, budget=None: check_rate_region(params, measure_rates(params, scheme)),
}


def run_checks(
    params: ProtocolParams,
    names: Sequence[str] | None = None,
    scheme: Scheme | None = None,
    budget: int | None = None,
) -> list[CheckReport]:
    names = list(CHECKS) if not names else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks {unknown}; choose from {list(CHECKS)}")
    return [CHECKS[n](params, scheme=scheme, budget=budget) for n in names]


def format_records(reports: Sequence[CheckReport]) -> str:
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for rep in reports for r in rep.records())


def summary_table(reports: Sequence[CheckReport]) -> str:
    head = f"{'check':<12} {'instances':>9} {'worlds':>8} {'min measured':>13} {'max measured':>13}  result"
    lines = [head, "-" * len(head)]
    for r in reports:
        m = r.measured
        lines.append(
            f"{r.name:<12} {len(r.instances):>9} {r.worlds:>8} "
            f"{min(m):>13.6f} {max(m):>13.6f}  {'PASS' if r.passed else 'FAIL'}"
        )
    return "\n".join(lines) + "\n"


# Negative-control schemes: each breaks one ingredient of the optimal design.

ZERO_KEYS = Scheme(
    "zero-keys",
    noise_count=lambda p: p.K - 1,
    derive=lambda p, noise: tuple(RingVector.zero(p.ring) for _ in p.users),
    message=lambda k, w, z: w + z,
)


def _shared_noise(p: ProtocolParams, noise):
    # users K-2 and K-1 share the last noise vector; user K restores the zero sum
    masks = list(noise) + [noise[-1]]
    total = masks[0]
    for m in masks[1:]:
        total = total + m
    return tuple(masks) + (-total,)


SHARED_NOISE = Scheme(
    "shared-noise",
    noise_count=lambda p: p.K - 2,
    derive=_shared_noise,
    message=lambda k, w, z: w + z,
)

NONZERO_SUM = Scheme(
    "nonzero-sum",
    noise_count=lambda p: p.K,
    derive=lambda p, noise: tuple(noise),
    message=lambda k, w, z: w + z,
)
