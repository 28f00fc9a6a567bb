"""Shared fixtures: one prime counter per session, brute-force oracles."""

from __future__ import annotations

import math

import pytest

from fensemble.primes import PrimeCounter


@pytest.fixture(scope="session")
def counter() -> PrimeCounter:
    return PrimeCounter()


def gap_typical_n(target: int, counter: PrimeCounter) -> int:
    """x(j)·x(j+1) for the first j at or above π(√target) whose gap is within 1 of ln x(j).

    Cardinality asymptotics average over prime gaps; an atypical gap around √N
    shifts F(j) proportionally.
    """
    j = counter.pi(math.isqrt(target))
    while True:
        x, x1 = counter.nth_prime(j), counter.nth_prime(j + 1)
        if abs((x1 - x) - math.log(x)) < 1:
            return x * x1
        j += 1


def omega(n: int) -> int:
    """Number of prime factors with multiplicity, by trial division."""
    count, d = 0, 2
    while d * d <= n:
        while n % d == 0:
            n //= d
            count += 1
        d += 1
    return count + (n > 1)


def brute_force_semiprimes(lower: int, upper: int) -> list[int]:
    return [n for n in range(lower, upper) if omega(n) == 2]
