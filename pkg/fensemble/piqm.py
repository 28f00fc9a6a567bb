"""π_QM(x;N) = E_QM(x;N) π(√N)² / π(N/x), and its convergence across N.

The primary form substitutes Li for both prime counts; the exact-π variant
counts π(N/x) directly and is meant for cross-checks at moderate N.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from fensemble.asymptotics import QmModel, e_qm, model_for_n, u_of_x, u_shortcut
from fensemble.errors import DomainError
from fensemble.primes import PrimeCounter, default_counter, li

logger = logging.getLogger(__name__)

MONOTONE_FROM_X = 10


def _check_x(x: int, model: QmModel) -> None:
    if x < 2:
        raise DomainError(f"π_QM needs x >= 2, got {x}")
    if not x < model.validity_bound:
        raise DomainError(
            f"x={x} outside the validity range x < {model.validity_bound:g} (κ >= κ₁)"
        )


def pi_qm(
    x: int,
    model: QmModel,
    *,
    exact_pi: bool = False,
    counter: PrimeCounter | None = None,
) -> float:
    _check_x(x, model)
    ctx = model.context
    energy = e_qm(x, model)
    if exact_pi:
        counter = counter or default_counter()
        return energy * ctx.j**2 / counter.pi(ctx.n // x)
    return energy * li(ctx.sqrt_n) ** 2 / li(ctx.n / x)


@dataclass(frozen=True)
class AsymptoticForms:
    literal: float  # E₁ γ x (1 + u) E_QM, as displayed
    algebraic: float  # γ x (1 + u) E_QM, following π(x)/(xγ) = E(1 + u)
    u_short: float

    @property
    def ratio(self) -> float:
        """literal / algebraic, i.e. E₁."""
        return self.literal / self.algebraic


def pi_qm_asymptotic(x: int, model: QmModel) -> AsymptoticForms:
    """Both readings of the large-N form with u ≃ 1 − γ(ln x − 1)."""
    _check_x(x, model)
    u = u_shortcut(x, model.gamma)
    algebraic = model.gamma * x * (1.0 + u) * e_qm(x, model)
    return AsymptoticForms(literal=model.e1 * algebraic, algebraic=algebraic, u_short=u)


@dataclass(frozen=True)
class ComparisonRow:
    """One x of a π_QM table; model columns stay None outside the validity range."""

    x: int
    pi_exact: int
    pi_qm: float | None = None
    pi_qm_asymptotic: float | None = None
    pi_qm_algebraic: float | None = None
    u: float | None = None
    e_qm: float | None = None
    note: str = ""

    @property
    def valid(self) -> bool:
        return self.pi_qm is not None

    @property
    def rel_err(self) -> float | None:
        if self.pi_qm is None or not self.pi_exact:
            return None
        return abs(self.pi_qm - self.pi_exact) / self.pi_exact


def comparison_row(
    x: int,
    model: QmModel,
    counter: PrimeCounter | None = None,
    *,
    exact_pi: bool = False,
) -> ComparisonRow:
    """Evaluate every model column at x; a domain error becomes a flagged row."""
    counter = counter or default_counter()
    actual = counter.pi(x)
    try:
        value = pi_qm(x, model, exact_pi=exact_pi, counter=counter)
        forms = pi_qm_asymptotic(x, model)
        return ComparisonRow(
            x=x,
            pi_exact=actual,
            pi_qm=value,
            pi_qm_asymptotic=forms.literal,
            pi_qm_algebraic=forms.algebraic,
            u=u_of_x(x, model.context),
            e_qm=e_qm(x, model),
        )
    except DomainError as exc:
        return ComparisonRow(x=x, pi_exact=actual, note=str(exc))


@dataclass(frozen=True)
class SweepResult:
    n: int
    model: QmModel | None
    rows: tuple[ComparisonRow, ...]
    error: str = ""
    monotone_violations: tuple[int, ...] = field(default=())

    @property
    def valid_rows(self) -> list[ComparisonRow]:
        return [row for row in self.rows if row.valid]

    @property
    def valid_points(self) -> int:
        return len(self.valid_rows)

    @property
    def invalid_points(self) -> int:
        return len(self.rows) - self.valid_points

    def _errors(self, xs: set[int] | None = None) -> np.ndarray:
        return np.array(
            [r.rel_err for r in self.valid_rows if xs is None or r.x in xs], dtype=np.float64
        )

    def median_rel_err(self, xs: set[int] | None = None) -> float:
        errors = self._errors(xs)
        return float(np.median(errors)) if len(errors) else math.nan

    def max_rel_err(self, xs: set[int] | None = None) -> float:
        errors = self._errors(xs)
        return float(errors.max()) if len(errors) else math.nan


def _monotone_violations(rows: Sequence[ComparisonRow]) -> tuple[int, ...]:
    """x values where π_QM falls below its value at the previous valid x (x >= 10)."""
    bad = []
    previous = None
    for row in rows:
        if not row.valid or row.x < MONOTONE_FROM_X:
            continue
        if previous is not None and row.pi_qm < previous.pi_qm:
            bad.append(row.x)
        previous = row
    return tuple(bad)


def sweep(
    n: int,
    x_grid: Iterable[int],
    counter: PrimeCounter | None = None,
    *,
    model: QmModel | None = None,
    cardinality: str = "asymptote",
    limit_exponents: bool = False,
    exact_pi: bool = False,
    threads: int = 1,
    **ensemble_kwargs,
) -> SweepResult:
    """π_QM table for one N; rows come back in grid order."""
    counter = counter or default_counter()
    xs = sorted(set(int(x) for x in x_grid))
    try:
        if model is None:
            model = model_for_n(
                n,
                counter,
                cardinality=cardinality,
                limit_exponents=limit_exponents,
                **ensemble_kwargs,
            )
    except DomainError as exc:
        logger.warning("N=%d: no model (%s)", n, exc)
        return SweepResult(
            n=n,
            model=None,
            rows=tuple(ComparisonRow(x=x, pi_exact=counter.pi(x), note=str(exc)) for x in xs),
            error=str(exc),
        )

    # prime tables grow under a lock; fill them before the workers start
    if xs:
        counter.pi(xs[-1])
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = tuple(
            pool.map(lambda x: comparison_row(x, model, counter, exact_pi=exact_pi), xs)
        )
    violations = _monotone_violations(rows)
    if violations:
        logger.warning("N=%d: π_QM decreases at x=%s", n, ",".join(map(str, violations)))
    invalid = sum(not r.valid for r in rows)
    if invalid:
        logger.info("N=%d: %d of %d x values outside the validity range", n, invalid, len(rows))
    return SweepResult(n=n, model=model, rows=rows, monotone_violations=violations)


@dataclass(frozen=True)
class ConvergenceReport:
    results: tuple[SweepResult, ...]
    common_x: tuple[int, ...]

    @property
    def medians(self) -> list[float]:
        """Median relative error per N over the x values valid at every N."""
        xs = set(self.common_x)
        return [r.median_rel_err(xs) for r in self.results]

    @property
    def non_increasing(self) -> bool:
        m = self.medians
        return all(b <= a for a, b in zip(m, m[1:]))

    @property
    def strictly_decreasing(self) -> bool:
        m = self.medians
        return all(b < a for a, b in zip(m, m[1:]))


def convergence_sweep(
    x_grid: Iterable[int],
    n_list: Iterable[int],
    counter: PrimeCounter | None = None,
    **sweep_kwargs,
) -> ConvergenceReport:
    """One sweep per N (ascending), compared over their common valid x."""
    x_grid = list(x_grid)
    results = tuple(sweep(n, x_grid, counter, **sweep_kwargs) for n in sorted(set(n_list)))
    common: set[int] | None = None
    for result in results:
        valid = {row.x for row in result.valid_rows}
        common = valid if common is None else common & valid
    report = ConvergenceReport(results=results, common_x=tuple(sorted(common or ())))
    if len(results) > 1 and not report.non_increasing:
        logger.warning(
            "median relative error does not fall with N: %s",
            ", ".join(f"N={r.n}: {m:.4g}" for r, m in zip(results, report.medians)),
        )
    return report
