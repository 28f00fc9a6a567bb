"""Factorization ensemble F(j): every two-prime-factor N_σ with π(√N_σ) = j.

The interval [x(j)², x(j+1)²) is factored by a strided sieve; integers with
exactly two prime factors (multiplicity counted) form the ensemble. Entries
carry the functional E = π(x)π(y)/j² and the inverted-oscillator coordinates
p, q as exact rationals.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from fensemble.config import DEFAULT_INTERVAL_BOUND
from fensemble.errors import DomainError, IntegrityError, ResourceLimitError
from fensemble.primes import (
    LI_CONVENTION,
    PrimeCounter,
    default_counter,
    meissel_mertens_c,
)

logger = logging.getLogger(__name__)

MIN_N = 9
MIN_ASYMPTOTE_N = 10**4


@dataclass(frozen=True)
class PrimeContext:
    """The input N with its derived constants."""

    n: int
    j: int
    x_j: int
    x_j1: int
    c: float

    @classmethod
    def from_n(cls, n: int, counter: PrimeCounter | None = None) -> PrimeContext:
        if n < MIN_N:
            raise DomainError(f"N must be >= {MIN_N}, got {n}")
        counter = counter or default_counter()
        j = counter.pi(math.isqrt(n))
        return cls(
            n=n,
            j=j,
            x_j=counter.nth_prime(j),
            x_j1=counter.nth_prime(j + 1),
            c=meissel_mertens_c(),
        )

    @property
    def sqrt_n(self) -> float:
        return math.sqrt(self.n)

    @property
    def gamma(self) -> float:
        return self.j / self.sqrt_n

    @property
    def lower(self) -> int:
        return self.x_j * self.x_j

    @property
    def upper(self) -> int:
        """Exclusive end of the admissible interval."""
        return self.x_j1 * self.x_j1

    @property
    def q_max(self) -> float:
        return self.sqrt_n / 8.0

    @property
    def gap(self) -> int:
        return self.x_j1 - self.x_j


@dataclass(frozen=True)
class EnsembleEntry:
    """One N_σ = x·y of the ensemble, x <= y."""

    n_sigma: int
    x: int
    y: int
    pi_x: int
    pi_y: int
    j: int
    k: int
    cardinality: int

    @property
    def e(self) -> Fraction:
        return Fraction(self.pi_x * self.pi_y, self.j * self.j)

    @property
    def p(self) -> Fraction:
        return Fraction(self.pi_y - self.pi_x, 2 * self.j)

    @property
    def q(self) -> Fraction:
        return Fraction(self.pi_y + self.pi_x, 2 * self.j)

    @property
    def t(self) -> float:
        # artanh(p/q) = ln(π(y)/π(x)) / 2, without the cancellation near p/q = 1
        return 0.5 * math.log(self.pi_y / self.pi_x)

    @property
    def gamma_sigma(self) -> float:
        return self.j / math.sqrt(self.n_sigma)

    @property
    def u(self) -> float:
        return self.gamma_sigma * math.log(math.sqrt(self.n_sigma) / self.x)

    @property
    def phi(self) -> int:
        return (self.x - 1) * (self.y - 1)

    @property
    def kappa(self) -> float:
        return self.k / self.cardinality


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Rank-ordered ensemble columns (ascending E, rank k = index + 1)."""

    context: PrimeContext
    n_sigma: np.ndarray
    x: np.ndarray
    pi_x: np.ndarray
    pi_y: np.ndarray
    include_squares: bool = True

    @property
    def cardinality(self) -> int:
        return len(self.n_sigma)

    F = cardinality

    @property
    def hilbert_dimension(self) -> int:
        return self.cardinality

    @cached_property
    def y(self) -> np.ndarray:
        return self.n_sigma // self.x

    @cached_property
    def k(self) -> np.ndarray:
        return np.arange(1, self.cardinality + 1, dtype=np.int64)

    @cached_property
    def kappa(self) -> np.ndarray:
        return self.k / max(self.cardinality, 1)

    @cached_property
    def e(self) -> np.ndarray:
        j = self.context.j
        return (self.pi_x * self.pi_y) / float(j * j)

    @cached_property
    def p(self) -> np.ndarray:
        return (self.pi_y - self.pi_x) / (2.0 * self.context.j)

    @cached_property
    def q(self) -> np.ndarray:
        return (self.pi_y + self.pi_x) / (2.0 * self.context.j)

    @cached_property
    def t(self) -> np.ndarray:
        return 0.5 * np.log(self.pi_y / self.pi_x)

    @cached_property
    def u(self) -> np.ndarray:
        root = np.sqrt(self.n_sigma.astype(np.float64))
        return (self.context.j / root) * np.log(root / self.x)

    @cached_property
    def entries(self) -> tuple[EnsembleEntry, ...]:
        j, f = self.context.j, self.cardinality
        return tuple(
            EnsembleEntry(
                n_sigma=int(n), x=int(x), y=int(y), pi_x=int(px), pi_y=int(py),
                j=j, k=i + 1, cardinality=f,
            )
            for i, (n, x, y, px, py) in enumerate(
                zip(self.n_sigma, self.x, self.y, self.pi_x, self.pi_y)
            )
        )

    def columns(self) -> dict[str, np.ndarray]:
        return {"n_sigma": self.n_sigma, "x": self.x, "pi_x": self.pi_x, "pi_y": self.pi_y}


def _factor_segment(lo: int, hi: int, primes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Semiprimes in [lo, hi) with their smallest prime factor.

    Strikes every prime power p^e < hi for p in ``primes`` (all primes <= x(j)),
    dividing the residues and counting factors. A residue left above 1 is a
    single prime larger than x(j).
    """
    size = hi - lo
    if size <= 0:
        empty = np.array([], dtype=np.int64)
        return empty, empty
    rem = np.arange(lo, hi, dtype=np.int64)
    omega = np.zeros(size, dtype=np.int16)
    spf = np.zeros(size, dtype=np.int64)

    for p in primes:
        p = int(p)
        start = (-lo) % p
        if start >= size:
            continue
        view = spf[start::p]
        view[view == 0] = p
        pk = p
        while pk < hi:
            start = (-lo) % pk
            if start >= size:
                break
            rem[start::pk] //= p
            omega[start::pk] += 1
            pk *= p

    omega[rem > 1] += 1
    mask = omega == 2
    values = np.arange(lo, hi, dtype=np.int64)[mask]
    return values, spf[mask]


def _segments(lower: int, upper: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, parts)
    step = -(-(upper - lower) // parts)
    return [(lo, min(lo + step, upper)) for lo in range(lower, upper, max(step, 1))]


def _pi_of_factors(
    context: PrimeContext, counter: PrimeCounter, n_sigma: np.ndarray, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """π(x) by position among primes <= x(j); π(y) by rank within each x block.

    For fixed x the cofactors are exactly the primes in
    ((lower-1)//x, (upper-1)//x], so the r-th of them has π = π((lower-1)//x) + r.
    """
    if not len(x):
        return np.array([], dtype=np.int64), np.array([], dtype=np.int64)
    primes = counter.primes_upto(context.x_j)
    pi_x = np.searchsorted(primes, x) + 1

    order = np.lexsort((n_sigma, x))
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    block_x = xs[starts]
    sizes = np.diff(np.r_[starts, len(xs)])
    base = counter.pi_of_quotients(context.lower - 1, block_x)
    rank = np.arange(len(xs)) - np.repeat(starts, sizes) + 1

    pi_y = np.empty(len(x), dtype=np.int64)
    pi_y[order] = np.repeat(base, sizes) + rank
    return pi_x.astype(np.int64), pi_y


def build_ensemble(
    n: int,
    counter: PrimeCounter | None = None,
    *,
    include_squares: bool = True,
    interval_bound: int = DEFAULT_INTERVAL_BOUND,
    threads: int = 1,
    cache=None,
) -> Ensemble:
    """Enumerate F(j) for the input N and rank it by ascending E.

    Ties in E are broken by descending x, then ascending N_σ, so large ranks
    map to large E.
    """
    counter = counter or default_counter()
    context = PrimeContext.from_n(n, counter)
    length = context.upper - context.lower
    if length > interval_bound:
        raise ResourceLimitError(
            f"interval [{context.lower}, {context.upper}) has length {length} "
            f"> bound {interval_bound}"
        )

    if cache is not None:
        cached = cache.load(n, include_squares)
        if cached is not None:
            logger.info("loaded ensemble for N=%d from cache", n)
            return Ensemble(context=context, include_squares=include_squares, **cached)

    primes = counter.primes_upto(context.x_j)
    segments = _segments(context.lower, context.upper, threads)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda seg: _factor_segment(seg[0], seg[1], primes), segments))
    n_sigma = np.concatenate([part[0] for part in parts]) if parts else np.array([], np.int64)
    x = np.concatenate([part[1] for part in parts]) if parts else np.array([], np.int64)

    pi_x, pi_y = _pi_of_factors(context, counter, n_sigma, x)
    if not include_squares:
        keep = n_sigma != x * x
        n_sigma, x, pi_x, pi_y = n_sigma[keep], x[keep], pi_x[keep], pi_y[keep]

    order = np.lexsort((n_sigma, -x, pi_x * pi_y))
    ensemble = Ensemble(
        context=context,
        n_sigma=n_sigma[order],
        x=x[order],
        pi_x=pi_x[order],
        pi_y=pi_y[order],
        include_squares=include_squares,
    )
    logger.info("N=%d: j=%d, interval length %d, F=%d", n, context.j, length, ensemble.cardinality)
    if cache is not None:
        cache.store(n, include_squares, ensemble.columns())
    return ensemble


def pi_difference_counts(
    context: PrimeContext,
    counter: PrimeCounter | None = None,
    include_squares: bool = True,
) -> dict[int, int]:
    """count(x) = π((upper-1)/x) − π((lower-1)/x) for every prime x <= x(j)."""
    counter = counter or default_counter()
    primes = counter.primes_upto(context.x_j)
    hi = counter.pi_of_quotients(context.upper - 1, primes)
    lo = counter.pi_of_quotients(context.lower - 1, primes)
    counts = {int(p): int(a - b) for p, a, b in zip(primes, hi, lo)}
    if not include_squares:
        counts[context.x_j] -= 1
    return {p: c for p, c in counts.items() if c > 0}


def _enumerated_counts(ensemble: Ensemble) -> dict[int, int]:
    values, counts = np.unique(ensemble.x, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def cardinality_exact(ensemble: Ensemble, counter: PrimeCounter | None = None) -> int:
    """F(j), checked against the per-x π-difference reconstruction."""
    expected = pi_difference_counts(ensemble.context, counter, ensemble.include_squares)
    found = _enumerated_counts(ensemble)
    if found != expected:
        bad = sorted(x for x in set(found) | set(expected) if found.get(x) != expected.get(x))
        raise IntegrityError(f"per-x counts disagree with π differences at x in {bad[:10]}")
    total = sum(expected.values())
    if total != ensemble.cardinality:
        raise IntegrityError(f"Σ count(x) = {total} but F = {ensemble.cardinality}")
    return ensemble.cardinality


def cardinality_asymptote(n: int, c: float | None = None) -> float:
    """F(j) ≃ √N (ln ln √N + C)(1 − ln ln √N / ln √N + 1/ln √N)."""
    if n < MIN_ASYMPTOTE_N:
        raise DomainError(f"the cardinality asymptote needs N >= {MIN_ASYMPTOTE_N}, got {n}")
    c = meissel_mertens_c() if c is None else c
    root = math.sqrt(n)
    log_root = math.log(root)
    loglog = math.log(log_root)
    return root * (loglog + c) * (1.0 - loglog / log_root + 1.0 / log_root)


def telescoped_cardinality(context: PrimeContext, counter: PrimeCounter | None = None) -> int:
    """f(j+1) − f(j−1) + j with f(j) = Σ_{i<j} π(x(j)²/x_i), read literally."""
    counter = counter or default_counter()

    def f(index: int) -> int:
        if index < 2:
            return 0
        xi = counter.nth_prime(index)
        primes = counter.primes_upto(counter.nth_prime(index - 1))
        return int(counter.pi_of_quotients(xi * xi, primes).sum())

    return f(context.j + 1) - f(context.j - 1) + context.j


@dataclass(frozen=True)
class StepBlock:
    """Ensemble entries sharing one x: the plateaus of the step function E."""

    x: int
    count: int
    e_min: float
    e_max: float
    k_min: int
    k_max: int


def step_structure(
    ensemble: Ensemble, counter: PrimeCounter | None = None
) -> dict[int, StepBlock]:
    """Per-x statistics, each count checked against its π difference."""
    expected = pi_difference_counts(ensemble.context, counter, ensemble.include_squares)
    blocks: dict[int, StepBlock] = {}
    order = np.argsort(ensemble.x, kind="stable")
    values, starts = np.unique(ensemble.x[order], return_index=True)
    ends = np.r_[starts[1:], len(order)]
    for value, start, end in zip(values, starts, ends):
        idx = order[start:end]
        x = int(value)
        if len(idx) != expected.get(x):
            raise IntegrityError(
                f"x={x}: {len(idx)} entries, π difference gives {expected.get(x)}"
            )
        e = ensemble.e[idx]
        blocks[x] = StepBlock(
            x=x,
            count=len(idx),
            e_min=float(e.min()),
            e_max=float(e.max()),
            k_min=int(idx.min()) + 1,
            k_max=int(idx.max()) + 1,
        )
    return blocks


def predicted_x3_band(context: PrimeContext, cardinality: int) -> tuple[float, float]:
    """[I − 5√N/6, I − √N/2): the ranks attributed to x = 3."""
    root = context.sqrt_n
    return cardinality - 5.0 * root / 6.0, cardinality - root / 2.0


@dataclass(frozen=True)
class EMaxCheck:
    x_at_max: tuple[int, ...]
    e_max: float
    scaled: float  # E_max · 3γ, ≈ 1 asymptotically


def e_max_check(ensemble: Ensemble) -> EMaxCheck:
    """Where E attains its maximum, and E_max relative to 1/(3γ)."""
    if ensemble.cardinality == 0:
        raise DomainError("empty ensemble has no maximum")
    top = ensemble.e.max()
    xs = np.unique(ensemble.x[ensemble.e == top])
    return EMaxCheck(
        x_at_max=tuple(int(v) for v in xs),
        e_max=float(top),
        scaled=float(top * 3.0 * ensemble.context.gamma),
    )


def verify_identities(ensemble: Ensemble, counter: PrimeCounter | None = None) -> int:
    """Check every entry; returns the number of entries checked.

    - q² − p² = E (exact rationals)
    - (x−1)(y−1) = N_σ − (x+y) + 1, and φ = N_σ − 2√N_σ cosh(u/γ_σ) + 1 in floats
    - x = y exactly when p = 0, and then N_σ = x(j)², E = 1
    - 0 < q <= (1 + π(N_σ/2)) / (2j), when N_σ/2 lies under the sieve limit
    - p = √E sinh t, q = √E cosh t to 1e-12
    """
    counter = counter or default_counter()
    context = ensemble.context
    for entry in ensemble.entries:
        e, p, q = entry.e, entry.p, entry.q
        if q * q - p * p != e:
            raise IntegrityError(f"q² − p² != E at N_σ={entry.n_sigma}")
        x, y, n = entry.x, entry.y, entry.n_sigma
        if x * y != n or entry.phi != n - (x + y) + 1:
            raise IntegrityError(f"totient identity fails at N_σ={n}")
        if (x == y) != (p == 0):
            raise IntegrityError(f"p = 0 must coincide with x = y at N_σ={n}")
        if x == y and (n != context.lower or e != 1):
            raise IntegrityError(f"square entry {n} is not x(j)² with E = 1")
        if q <= 0:
            raise IntegrityError(f"q <= 0 at N_σ={n}")

    if not ensemble.cardinality:
        return 0

    n_sigma = ensemble.n_sigma.astype(np.float64)
    root = np.sqrt(n_sigma)
    phi = (ensemble.x - 1) * (ensemble.y - 1)
    gamma_sigma = context.j / root
    totient = n_sigma - 2.0 * root * np.cosh(ensemble.u / gamma_sigma) + 1.0
    if not np.allclose(totient, phi, rtol=1e-9, atol=1e-6):
        raise IntegrityError("φ = N_σ − 2√N_σ cosh(u/γ) + 1 fails")

    half = context.upper // 2
    if half <= counter.sieve_limit:
        primes = counter.primes_upto(half)
        pi_half = np.searchsorted(primes, ensemble.n_sigma // 2, side="right")
        if np.any(ensemble.pi_x + ensemble.pi_y > 1 + pi_half):
            raise IntegrityError("q exceeds (1 + π(N_σ/2)) / (2j)")
    else:
        logger.debug("skipping the q bound: N_σ/2 exceeds the sieve limit")

    root_e = np.sqrt(ensemble.e)
    if not (
        np.allclose(root_e * np.sinh(ensemble.t), ensemble.p, rtol=1e-12, atol=1e-12)
        and np.allclose(root_e * np.cosh(ensemble.t), ensemble.q, rtol=1e-12, atol=0)
    ):
        raise IntegrityError("trajectory reconstruction p = √E sinh t, q = √E cosh t fails")
    return ensemble.cardinality


@dataclass(frozen=True)
class CardinalityReport:
    n: int
    j: int
    gamma: float
    lower: int
    upper: int
    exact: int
    from_pi_differences: int
    asymptote: float | None
    telescoped: int
    x3_band_observed: tuple[int, int] | None
    x3_band_predicted: tuple[float, float]
    li_convention: str = LI_CONVENTION

    @property
    def telescoped_discrepancy(self) -> int:
        return self.telescoped - self.exact

    def as_dict(self) -> dict:
        return {
            "N": self.n,
            "j": self.j,
            "gamma": self.gamma,
            "interval": [self.lower, self.upper],
            "F_exact": self.exact,
            "F_pi_differences": self.from_pi_differences,
            "F_asymptote": self.asymptote,
            "F_telescoped": self.telescoped,
            "telescoped_discrepancy": self.telescoped_discrepancy,
            "hilbert_dimension": self.exact,
            "x3_band_observed": list(self.x3_band_observed) if self.x3_band_observed else None,
            "x3_band_predicted": list(self.x3_band_predicted),
            "li_convention": self.li_convention,
        }


def cardinality_report(
    ensemble: Ensemble, counter: PrimeCounter | None = None
) -> CardinalityReport:
    """Exact F next to its π-difference total, the asymptote and the telescoped sum."""
    counter = counter or default_counter()
    context = ensemble.context
    exact = cardinality_exact(ensemble, counter)
    telescoped = telescoped_cardinality(context, counter)
    if telescoped != exact:
        logger.warning(
            "telescoped f(j+1) − f(j−1) + j = %d differs from enumerated F = %d",
            telescoped,
            exact,
        )
    blocks = step_structure(ensemble, counter)
    observed = (blocks[3].k_min, blocks[3].k_max) if 3 in blocks else None
    return CardinalityReport(
        n=context.n,
        j=context.j,
        gamma=context.gamma,
        lower=context.lower,
        upper=context.upper,
        exact=exact,
        from_pi_differences=sum(b.count for b in blocks.values()),
        asymptote=cardinality_asymptote(context.n) if context.n >= MIN_ASYMPTOTE_N else None,
        telescoped=telescoped,
        x3_band_observed=observed,
        x3_band_predicted=predicted_x3_band(context, exact),
    )
