"""Integer sequences that serve as trap spectra, plus exhaustive checks of
the twin-prime/Goldbach structure behind the two-body cascade.

All membership scans are exhaustive up to the requested limit; nothing here
attempts analytic number theory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.signal import fftconvolve


class GoldbachViolationError(Exception):
    """An even number >= 6 with no decomposition into two odd primes.

    Raised instead of returning False so that an empty level is never
    silently conflated with a no-lower-twin result.
    """


class SequenceKind(str, Enum):
    PRIMES = "primes"
    PRIMES_GT2 = "primes-gt2"
    LN_NATURALS = "ln-naturals"
    LN_NATURALS_WITH_HOLES = "ln-naturals-with-holes"
    LN_SUM_TWO_SQUARES = "ln-sum-two-squares"


@dataclass(frozen=True)
class PrimeTable:
    """Eratosthenes sieve up to ``limit``; flags[n] is True iff n is prime."""

    limit: int
    flags: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, limit: int) -> "PrimeTable":
        if limit < 2:
            raise ValueError(f"sieve limit must be >= 2, got {limit}")
        flags = np.ones(limit + 1, dtype=bool)
        flags[:2] = False
        for p in range(2, math.isqrt(limit) + 1):
            if flags[p]:
                flags[p * p :: p] = False
        flags.setflags(write=False)
        return cls(limit, flags)

    def is_prime(self, n: int) -> bool:
        if not 0 <= n <= self.limit:
            raise ValueError(f"{n} outside sieve range [0, {self.limit}]")
        return bool(self.flags[n])

    def primes(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    def is_lower_twin(self, p: int) -> bool:
        """True iff p and p+2 are both prime."""
        if not self.is_prime(p):
            raise ValueError(f"{p} is not prime")
        if p + 2 > self.limit:
            raise ValueError(f"sieve too small to test {p}+2")
        return bool(self.flags[p + 2])


def sundaram_flags(limit: int) -> np.ndarray:
    """Independent sieve (Sundaram) used to cross-check Eratosthenes."""
    if limit < 2:
        raise ValueError(f"sieve limit must be >= 2, got {limit}")
    k = (limit - 1) // 2
    marked = np.zeros(k + 1, dtype=bool)
    for i in range(1, (math.isqrt(2 * k + 1) - 1) // 2 + 1):
        first = 2 * i * (i + 1)
        if first > k:
            break
        marked[first :: 2 * i + 1] = True
    flags = np.zeros(limit + 1, dtype=bool)
    flags[2] = True
    odd = 2 * np.flatnonzero(~marked[1:]) + 3
    flags[odd[odd <= limit]] = True
    return flags


def primes_upto(limit: int) -> np.ndarray:
    """Ascending array of all primes <= limit."""
    return PrimeTable.build(limit).primes()


def first_primes(count: int) -> np.ndarray:
    """The first ``count`` primes."""
    if count < 1:
        raise ValueError("count must be >= 1")
    # p_n < n(ln n + ln ln n) for n >= 6
    bound = 15 if count < 6 else int(count * (math.log(count) + math.log(math.log(count)))) + 10
    primes = primes_upto(bound)
    while len(primes) < count:
        bound *= 2
        primes = primes_upto(bound)
    return primes[:count]


def is_lower_twin(p: int, table: PrimeTable | None = None) -> bool:
    """True iff prime p has p+2 prime as well."""
    if table is None:
        table = PrimeTable.build(p + 2)
    return table.is_lower_twin(p)


def sums_of_two_squares_upto(limit: int) -> np.ndarray:
    """Ascending positive integers <= limit of the form a^2 + b^2 (a, b >= 0).

    Zero is excluded. The sequence starts 1, 2, 4, 5, 8, 9, ...
    """
    if limit < 1:
        return np.array([], dtype=np.int64)
    r = math.isqrt(limit)
    a = np.arange(0, r + 1, dtype=np.int64)
    sums = (a[:, None] ** 2 + a[None, :] ** 2).ravel()
    sums = np.unique(sums)
    return sums[(sums >= 1) & (sums <= limit)]


def first_sums_of_two_squares(count: int) -> np.ndarray:
    """The first ``count`` nonzero sums of two squares."""
    if count < 1:
        raise ValueError("count must be >= 1")
    limit = max(8, 2 * count)
    seq = sums_of_two_squares_upto(limit)
    while len(seq) < count:
        limit *= 2
        seq = sums_of_two_squares_upto(limit)
    return seq[:count]


@dataclass(frozen=True)
class GoldbachPartition:
    """All unordered decompositions of even w into two primes > 2."""

    w: int
    pairs: tuple[tuple[int, int], ...]  # each (p1, p2) with p1 <= p2


def goldbach_partitions(w: int, table: PrimeTable | None = None) -> GoldbachPartition:
    """Exhaustive Goldbach decompositions of w into odd primes, p1 <= p2."""
    if w % 2 != 0 or w < 6:
        raise ValueError(f"need an even integer >= 6, got {w}")
    if table is None or table.limit < w:
        table = PrimeTable.build(w)
    pairs = []
    for p in range(3, w // 2 + 1, 2):
        if table.flags[p] and table.flags[w - p]:
            pairs.append((p, w - p))
    return GoldbachPartition(w, tuple(pairs))


def _nlt_from_pairs(pairs, table: PrimeTable) -> bool:
    if not pairs:
        raise GoldbachViolationError("no decomposition into two odd primes")
    for p1, p2 in pairs:
        if table.is_lower_twin(p1) or table.is_lower_twin(p2):
            return False
    return True


def is_nlt(w: int, table: PrimeTable | None = None) -> bool:
    """True iff no Goldbach decomposition of w contains a lower twin prime.

    Raises GoldbachViolationError if w has no decomposition at all.
    """
    if table is None or table.limit < w + 2:
        table = PrimeTable.build(w + 2)
    return _nlt_from_pairs(goldbach_partitions(w, table).pairs, table)


@dataclass(frozen=True)
class NltCensus:
    """Exhaustive no-lower-twin scan over even numbers in [6, limit]."""

    limit: int
    evens: np.ndarray = field(repr=False)  # 6, 8, ..., <= limit
    partition_counts: np.ndarray = field(repr=False)
    nlt_flags: np.ndarray = field(repr=False)
    members: np.ndarray = field(repr=False)
    count: int
    lower_bound_check: bool  # count >= limit/30 - 19/15
    estimate_ratio: float  # count / (limit/6)
    provable_sequence_ok: bool  # every 2(15k+4) <= limit is a member
    goldbach_violations: np.ndarray = field(repr=False)


def nlt_census(limit: int) -> NltCensus:
    """Scan all even w in [6, limit] for the no-lower-twin property.

    Pair counts come from an FFT convolution of the odd-prime indicator with
    itself; integer counts stay far above the float round-off, so the
    thresholding at 1/2 is exact.
    """
    if limit < 38:
        raise ValueError("census limit must be >= 38")
    table = PrimeTable.build(limit + 2)
    odd_prime = table.flags.astype(np.float64)
    odd_prime[2] = 0.0
    lower_twin = np.zeros_like(odd_prime)
    p = np.flatnonzero(table.flags[:-2] & table.flags[2:])
    p = p[p > 2]
    lower_twin[p] = 1.0

    # ordered-pair counts r(w) = #{(p, q) odd primes : p + q = w}
    r = fftconvolve(odd_prime, odd_prime)[: limit + 1]
    twin_hits = fftconvolve(lower_twin, odd_prime)[: limit + 1]

    evens = np.arange(6, limit + 1, 2)
    r_even = np.rint(r[evens]).astype(np.int64)
    half_prime = np.zeros(len(evens), dtype=np.int64)
    half = evens // 2
    odd_half = half % 2 == 1
    half_prime[odd_half] = table.flags[half[odd_half]].astype(np.int64)
    pair_counts = (r_even + half_prime) // 2

    has_partition = pair_counts > 0
    has_twin_partition = np.rint(twin_hits[evens]) > 0
    nlt = has_partition & ~has_twin_partition

    members = evens[nlt]
    count = int(nlt.sum())

    k = np.arange(1, (limit // 2 - 4) // 15 + 1)
    provable = 2 * (15 * k + 4)
    provable = provable[provable <= limit]
    member_set = set(members.tolist())
    provable_ok = all(int(w) in member_set for w in provable)

    return NltCensus(
        limit=limit,
        evens=evens,
        partition_counts=pair_counts,
        nlt_flags=nlt,
        members=members,
        count=count,
        lower_bound_check=count >= limit / 30 - 19 / 15,
        estimate_ratio=count / (limit / 6),
        provable_sequence_ok=provable_ok,
        goldbach_violations=evens[~has_partition],
    )


@dataclass(frozen=True)
class SequenceSpec:
    """Which integer sequence to encode, how many levels, optional holes."""

    kind: SequenceKind
    count: int
    holes: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.holes and self.kind is not SequenceKind.LN_NATURALS_WITH_HOLES:
            raise ValueError("holes are only valid for ln-naturals-with-holes")
        if self.kind is SequenceKind.LN_NATURALS_WITH_HOLES:
            self._validate_holes()

    def _validate_holes(self):
        holes = sorted(self.holes)
        if not holes:
            raise ValueError("ln-naturals-with-holes needs a nonempty hole set")
        if holes[0] < 2 or holes[-1] > self.count:
            raise ValueError(f"holes must lie in [2, {self.count}]")
        if len(holes) % 2 != 0 or any(
            holes[i + 1] != holes[i] + 1 for i in range(0, len(holes), 2)
        ):
            raise ValueError(
                "holes must form consecutive pairs so the remaining levels keep "
                "alternating parity"
            )


@dataclass(frozen=True)
class Spectrum:
    """Ordered target bound-state energies in units of U0, with provenance."""

    kind: SequenceKind
    n_levels: int  # the nominal N_b of the generating sequence
    u0: float
    energies: tuple[float, ...]
    labels: tuple[int, ...]  # sequence index n behind each level
    holes: tuple[int, ...] = ()

    def __len__(self):
        return len(self.energies)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind.value,
                "N_b": self.n_levels,
                "U0": self.u0,
                "energies": list(self.energies),
                "holes": sorted(self.holes),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Spectrum":
        data = json.loads(text)
        spec = SequenceSpec(
            SequenceKind(data["kind"]), data["N_b"], frozenset(data.get("holes", ()))
        )
        spectrum = target_spectrum(spec, data["U0"])
        stored = np.asarray(data["energies"], dtype=float)
        if len(stored) != len(spectrum) or not np.allclose(stored, spectrum.energies):
            raise ValueError("stored energies disagree with the declared sequence")
        return spectrum


def target_spectrum(spec: SequenceSpec, u0: float = 1.0) -> Spectrum:
    """Build the target spectrum for a sequence choice.

    PRIMES gives u0*p_n (2, 3, 5, ...); PRIMES_GT2 drops the 2; the ln kinds
    give u0*ln of the sequence member; holes remove the excluded indices.
    """
    if u0 <= 0:
        raise ValueError("u0 must be positive")
    kind, n = spec.kind, spec.count
    if kind is SequenceKind.PRIMES:
        values = first_primes(n).astype(float)
        energies = u0 * values
        labels = tuple(range(1, n + 1))
    elif kind is SequenceKind.PRIMES_GT2:
        values = first_primes(n + 1)[1:].astype(float)
        energies = u0 * values
        labels = tuple(range(1, n + 1))
    elif kind is SequenceKind.LN_NATURALS:
        labels = tuple(range(1, n + 1))
        energies = u0 * np.log(np.arange(1, n + 1, dtype=float))
    elif kind is SequenceKind.LN_NATURALS_WITH_HOLES:
        labels = tuple(m for m in range(1, n + 1) if m not in spec.holes)
        energies = u0 * np.log(np.array(labels, dtype=float))
    elif kind is SequenceKind.LN_SUM_TWO_SQUARES:
        labels = tuple(range(1, n + 1))
        energies = u0 * np.log(first_sums_of_two_squares(n).astype(float))
    else:  # pragma: no cover
        raise ValueError(f"unknown sequence kind {kind}")
    return Spectrum(
        kind=kind,
        n_levels=n,
        u0=u0,
        energies=tuple(float(e) for e in energies),
        labels=labels,
        holes=tuple(sorted(spec.holes)),
    )
