"""Prime counting: segmented sieve table, sublinear (Lucy) counts, Li, Mertens.

Exact π(x) comes from a packed odd-only sieve below the sieve limit and from a
memoized Lucy table above it. Li(x) uses the offset convention Li(2) = 0.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from functools import cache, lru_cache

import numpy as np
from scipy import integrate

from fensemble.config import DEFAULT_CEILING, DEFAULT_SIEVE_LIMIT
from fensemble.errors import DomainError, ResourceLimitError

logger = logging.getLogger(__name__)

BLOCK_NUMBERS = 1 << 16  # checkpoint spacing, in integers
BLOCK_ODDS = BLOCK_NUMBERS // 2
BLOCK_BYTES = BLOCK_ODDS // 8
SEGMENT_ODDS = 1 << 22

# Meissel-Mertens constant B1
MERTENS_B1 = 0.26149721284764278375542683860869585905156664826120
LI_LOWER_LIMIT = 2.0
LI_EPSABS = 1e-10
LI_CONVENTION = "offset: Li(x) = integral from 2 to x of dt/ln t"


def simple_sieve(limit: int) -> np.ndarray:
    """All primes <= limit as an int64 array (plain Eratosthenes)."""
    if limit < 2:
        return np.array([], dtype=np.int64)
    is_prime = np.ones(limit + 1, dtype=bool)
    is_prime[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if is_prime[p]:
            is_prime[p * p :: p] = False
    return np.flatnonzero(is_prime).astype(np.int64)


def _sieve_odd_flags(limit: int) -> np.ndarray:
    """Odd-only primality flags: index i stands for 2i + 1."""
    n_odd = (limit + 1) // 2
    base = simple_sieve(math.isqrt(limit))[1:]  # odd base primes
    flags = np.empty(n_odd, dtype=bool)

    for lo in range(0, n_odd, SEGMENT_ODDS):
        hi = min(lo + SEGMENT_ODDS, n_odd)
        mask = np.ones(hi - lo, dtype=bool)
        for p in base:
            p = int(p)
            start = (p * p) // 2
            if start >= hi:
                break
            if start < lo:
                start += ((lo - start + p - 1) // p) * p
            mask[start - lo :: p] = False
        flags[lo:hi] = mask

    if n_odd:
        flags[0] = False  # 1 is not prime
    return flags


class PrimeTable:
    """Packed odd-only sieve up to ``limit`` with cumulative checkpoints.

    ``checkpoints[b]`` is the number of odd primes with odd index below
    ``b * BLOCK_ODDS``; a rank query unpacks at most one block.
    """

    def __init__(self, limit: int, bits: np.ndarray | None = None):
        if limit < 2:
            limit = 2
        self.limit = limit
        self.n_odd = (limit + 1) // 2
        if bits is None:
            bits = np.packbits(_sieve_odd_flags(limit), bitorder="little")
        self.bits = bits
        self.checkpoints = self._build_checkpoints()

    def _build_checkpoints(self) -> np.ndarray:
        n_blocks = -(-len(self.bits) // BLOCK_BYTES)
        padded = np.zeros(n_blocks * BLOCK_BYTES, dtype=np.uint8)
        padded[: len(self.bits)] = self.bits
        flags = np.unpackbits(padded, bitorder="little").reshape(n_blocks, BLOCK_ODDS)
        sums = flags.sum(axis=1, dtype=np.int64)
        return np.concatenate(([0], np.cumsum(sums))).astype(np.int64)

    def _odd_rank(self, count: int) -> int:
        """Number of set flags among odd indices [0, count)."""
        block, rest = divmod(count, BLOCK_ODDS)
        total = int(self.checkpoints[block])
        if rest:
            start = block * BLOCK_BYTES
            chunk = np.unpackbits(
                self.bits[start : start + BLOCK_BYTES], bitorder="little"
            )[:rest]
            total += int(chunk.sum())
        return total

    def is_prime(self, n: int) -> bool:
        if n > self.limit:
            raise DomainError(f"{n} exceeds table limit {self.limit}")
        if n < 2:
            return False
        if n == 2:
            return True
        if n % 2 == 0:
            return False
        i = n // 2
        return bool((self.bits[i >> 3] >> (i & 7)) & 1)

    def pi(self, x: int) -> int:
        if x > self.limit:
            raise DomainError(f"{x} exceeds table limit {self.limit}")
        if x < 2:
            return 0
        return 1 + self._odd_rank((x - 1) // 2 + 1)

    def prime_count(self) -> int:
        return 1 + int(self.checkpoints[-1])

    def nth(self, j: int) -> int:
        """The j-th prime, provided it lies inside the table."""
        if j < 1:
            raise DomainError(f"prime index must be >= 1, got {j}")
        if j == 1:
            return 2
        target = j - 1  # rank among odd primes
        if target > int(self.checkpoints[-1]):
            raise DomainError(f"table up to {self.limit} holds fewer than {j} primes")
        block = int(np.searchsorted(self.checkpoints, target, side="left")) - 1
        start = block * BLOCK_BYTES
        flags = np.unpackbits(self.bits[start : start + BLOCK_BYTES], bitorder="little")
        positions = np.flatnonzero(flags)
        pos = int(positions[target - int(self.checkpoints[block]) - 1])
        return 2 * (block * BLOCK_ODDS + pos) + 1

    def primes_upto(self, n: int) -> np.ndarray:
        n = min(n, self.limit)
        if n < 2:
            return np.array([], dtype=np.int64)
        count = (n - 1) // 2 + 1
        flags = np.unpackbits(self.bits[: -(-count // 8)], bitorder="little")[:count]
        odd = 2 * np.flatnonzero(flags).astype(np.int64) + 1
        return np.concatenate((np.array([2], dtype=np.int64), odd))


@dataclass(frozen=True)
class QuotientCounts:
    """π(v) for every v of the form ⌊m/d⌋ (Lucy's partial sieve values).

    ``small[v] = π(v)`` for ``v <= r`` and ``large[i] = π(m // i)`` for
    ``1 <= i <= r`` where ``r = isqrt(m)``.
    """

    m: int
    small: np.ndarray
    large: np.ndarray

    @property
    def r(self) -> int:
        return len(self.small) - 1

    def __call__(self, v: int) -> int:
        v = int(v)
        if v < 0 or v > self.m:
            raise DomainError(f"{v} outside [0, {self.m}]")
        if v <= self.r:
            return int(self.small[v])
        i = self.m // v
        if self.m // i != v:
            raise DomainError(f"{v} is not of the form {self.m} // d")
        return int(self.large[i])

    def of_divisors(self, divisors: np.ndarray) -> np.ndarray:
        """Vectorized π(m // d)."""
        divisors = np.asarray(divisors, dtype=np.int64)
        values = self.m // divisors
        out = np.empty(len(divisors), dtype=np.int64)
        low = values <= self.r
        out[low] = self.small[values[low]]
        out[~low] = self.large[divisors[~low]]
        return out


@lru_cache(maxsize=8)
def lucy_counts(m: int) -> QuotientCounts:
    """Lucy_Hedgehog prime counting, O(m^(3/4)) time, O(m^(1/2)) memory."""
    if m < 0:
        raise DomainError(f"cannot count primes below {m}")
    r = math.isqrt(m)
    small = np.arange(-1, r, dtype=np.int64)  # small[v] = v - 1
    small[0] = 0
    large = np.zeros(r + 1, dtype=np.int64)
    if r:
        large[1:] = m // np.arange(1, r + 1, dtype=np.int64) - 1

    for p in simple_sieve(r):
        p = int(p)
        sp = small[p - 1]
        p2 = p * p
        lim = min(r, m // p2)
        if lim >= 1:
            ip = np.arange(1, lim + 1, dtype=np.int64) * p
            vals = np.empty(lim, dtype=np.int64)
            inside = ip <= r
            vals[inside] = large[ip[inside]]
            vals[~inside] = small[m // ip[~inside]]
            large[1 : lim + 1] -= vals - sp
        if p2 <= r:
            v = np.arange(p2, r + 1, dtype=np.int64)
            small[p2:] -= small[v // p] - sp

    return QuotientCounts(m=m, small=small, large=large)


class PrimeCounter:
    """Exact π(x) and x(j): sieve below ``sieve_limit``, Lucy counts above.

    The sieve table grows on demand (doubling, capped at ``sieve_limit``).
    Growth is serialized; queries are read-only afterwards.
    """

    def __init__(
        self,
        sieve_limit: int = DEFAULT_SIEVE_LIMIT,
        ceiling: int = DEFAULT_CEILING,
        sieve_cache=None,
    ):
        self.sieve_limit = sieve_limit
        self.ceiling = ceiling
        self.sieve_cache = sieve_cache
        self._table: PrimeTable | None = None
        self._lock = threading.Lock()

    def _check_ceiling(self, x: int) -> None:
        if x > self.ceiling:
            raise ResourceLimitError(f"{x} exceeds the prime-counting ceiling {self.ceiling}")

    def table(self, limit: int) -> PrimeTable:
        """A sieve table covering at least ``limit`` (within sieve_limit)."""
        if limit > self.sieve_limit:
            raise ResourceLimitError(
                f"sieve table up to {limit} exceeds sieve limit {self.sieve_limit}"
            )
        with self._lock:
            current = self._table
            if current is None or current.limit < limit:
                grown = max(limit, BLOCK_NUMBERS)
                if current is not None:
                    grown = max(grown, 2 * current.limit)
                grown = min(grown, self.sieve_limit)
                self._table = self._load_or_build(grown)
            return self._table

    def _load_or_build(self, limit: int) -> PrimeTable:
        if self.sieve_cache is not None:
            cached = self.sieve_cache.load(limit)
            if cached is not None:
                logger.info("loaded sieve table up to %d from cache", cached.limit)
                return cached
        logger.info("sieving up to %d", limit)
        table = PrimeTable(limit)
        if self.sieve_cache is not None:
            self.sieve_cache.store(table)
        return table

    @property
    def table_limit(self) -> int:
        return self._table.limit if self._table is not None else 0

    def pi(self, x: int) -> int:
        x = int(x)
        if x < 0:
            raise DomainError(f"pi is defined for x >= 0, got {x}")
        self._check_ceiling(x)
        if x <= self.sieve_limit:
            return self.table(x).pi(x)
        return lucy_counts(x).large[1].item()

    def quotient_counts(self, m: int) -> QuotientCounts | PrimeTable:
        """An object answering π(m // d); the live table when it covers m."""
        self._check_ceiling(m)
        if m <= self.table_limit:
            return self._table
        return lucy_counts(m)

    def pi_of_quotients(self, m: int, divisors: np.ndarray) -> np.ndarray:
        """π(m // d) for each divisor d."""
        divisors = np.asarray(divisors, dtype=np.int64)
        counts = self.quotient_counts(m)
        if isinstance(counts, QuotientCounts):
            return counts.of_divisors(divisors)
        return np.array([counts.pi(int(v)) for v in m // divisors], dtype=np.int64)

    def nth_prime(self, j: int) -> int:
        if j < 1:
            raise DomainError(f"prime index must be >= 1, got {j}")
        bound = _nth_prime_upper_bound(j)
        self._check_ceiling(bound)
        return self.table(bound).nth(j)

    def primes_upto(self, n: int) -> np.ndarray:
        return self.table(n).primes_upto(n)

    def is_prime(self, n: int) -> bool:
        return self.table(n).is_prime(n)


def _nth_prime_upper_bound(j: int) -> int:
    """Rosser-type bound x(j) < j (ln j + ln ln j) for j >= 6."""
    if j < 6:
        return 13
    lj = math.log(j)
    return int(j * (lj + math.log(lj))) + 1


@cache
def default_counter() -> PrimeCounter:
    return PrimeCounter()


def pi_exact(x: int, counter: PrimeCounter | None = None) -> int:
    """Exact number of primes <= x."""
    return (counter or default_counter()).pi(x)


def nth_prime(j: int, counter: PrimeCounter | None = None) -> int:
    """The j-th prime x(j); inverse of pi_exact on primes."""
    return (counter or default_counter()).nth_prime(j)


def li(x: float) -> float:
    """Offset logarithmic integral ∫_2^x dt/ln t by adaptive quadrature.

    Integrates e^s/s over s = ln t, which keeps the integrand smooth on long
    ranges. Absolute tolerance 1e-10, relative 1e-12 for large x.
    """
    if not x >= LI_LOWER_LIMIT:
        raise DomainError(f"Li(x) requires x >= 2, got {x}")
    if x == LI_LOWER_LIMIT:
        return 0.0
    lo, hi = math.log(LI_LOWER_LIMIT), math.log(x)
    value, _err = integrate.quad(
        lambda s: math.exp(s) / s, lo, hi, epsabs=LI_EPSABS, epsrel=1e-12, limit=200
    )
    return value


def meissel_mertens_c() -> float:
    """C = ln 2 + B1, the constant of the ensemble cardinality asymptote."""
    return math.log(2.0) + MERTENS_B1


def mertens_partial_sum(limit: int, counter: PrimeCounter | None = None) -> float:
    """Σ_{p<=L} 1/p − ln ln L, which tends to B1."""
    if limit < 3:
        raise DomainError(f"partial sum needs L >= 3, got {limit}")
    primes = (counter or default_counter()).primes_upto(limit)
    return float(np.sum(1.0 / primes)) - math.log(math.log(limit))
