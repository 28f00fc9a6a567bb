"""Confined inverted oscillator: ψ'' + q²ψ = Eψ on [√E, √N/8] with ψ = 0 at both ends.

Two independent routes to the levels:

- shooting on the Prüfer angle θ (ψ = r sin θ, ψ' = r cos θ), which turns the
  eigenvalue condition ψ(q_max) = 0 into θ(q_max) = mπ and never overflows;
- the asymptotic phase condition built from the Coulomb phase of Γ(3/4 − iE/4)
  plus a logarithmic drift A√N ln E + h₁, root-found per node count.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate, optimize, special

from fensemble.asymptotics import kappa1_series
from fensemble.config import DEFAULT_RTOL
from fensemble.errors import DomainError, IntegrationError

logger = logging.getLogger(__name__)

ROOT_RTOL = 1e-12
ODE_MAX_N = 10**6
DEFAULT_E_MIN = 0.5
DEFAULT_TOP_FRACTION = 0.99
PHASE_GRID_POINTS = 512


class SolveMethod(str, Enum):
    ODE = "ode"
    PHASE = "phase"


@dataclass(frozen=True)
class SpectralLevel:
    n: int  # nodes strictly inside (√E, q_max)
    k: int
    e: float
    method: SolveMethod
    residual: float
    e_reduced: float | None = None


def q_max(n: int) -> float:
    return math.sqrt(n) / 8.0


def level_count(n: int) -> int:
    """⌊N/(128π)⌋, the semiclassical number of confined levels; n + k equals it."""
    return int(n // (128.0 * math.pi))


class ShootingSolver:
    """Shooting on the eigenvalue-dependent domain [√E, q_max].

    θ' = cos²θ + (q² − E) sin²θ with θ(√E) = 0. θ(q_max) decreases with E,
    so every level is a crossing of θ(q_max; E) through a multiple of π.
    """

    def __init__(self, n: int, rtol: float = DEFAULT_RTOL, threads: int = 1):
        if n > ODE_MAX_N:
            raise DomainError(
                f"direct shooting is limited to N <= {ODE_MAX_N}; use the phase spectrum"
            )
        if n < 64:
            raise DomainError(f"N must be >= 64 for a non-trivial box, got {n}")
        self.n = n
        self.q_max = q_max(n)
        self.rtol = rtol
        self.threads = max(1, threads)

    def theta_end(self, e: float) -> float:
        """Prüfer angle at q_max for trial eigenvalue E."""
        if not 0 < e < self.q_max**2:
            raise DomainError(f"E must lie in (0, {self.q_max**2}), got {e}")

        def rhs(q, theta):
            s = math.sin(theta[0])
            c = math.cos(theta[0])
            return [c * c + (q * q - e) * s * s]

        sol = integrate.solve_ivp(
            rhs,
            (math.sqrt(e), self.q_max),
            [0.0],
            method="DOP853",
            rtol=self.rtol,
            atol=self.rtol,
        )
        if not sol.success:
            raise IntegrationError(f"integration failed at E={e}: {sol.message}")
        return float(sol.y[0, -1])

    def mismatch(self, e: float) -> float:
        """ψ(q_max) with (ψ, ψ') normalized to unit length."""
        return math.sin(self.theta_end(e))

    def _scan(self, grid: np.ndarray) -> np.ndarray:
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return np.array(list(pool.map(self.theta_end, grid)))

    def solve(
        self, e_range: tuple[float, float] | None = None, grid_points: int | None = None
    ) -> list[SpectralLevel]:
        """All levels with E inside ``e_range``, ascending in E."""
        e_lo, e_hi = e_range or default_e_range(self.n)
        if not 0 < e_lo < e_hi < self.q_max**2:
            raise DomainError(f"bad E range ({e_lo}, {e_hi}) for q_max² = {self.q_max**2}")
        if grid_points is None:
            grid_points = 4 * level_count(self.n) + 64
        grid = np.linspace(e_lo, e_hi, grid_points)
        theta = self._scan(grid)

        total = level_count(self.n)
        levels: list[SpectralLevel] = []
        for i in range(len(grid) - 1):
            m_hi = math.floor(theta[i] / math.pi)
            m_lo = math.floor(theta[i + 1] / math.pi)
            # θ falls with E, so a level m sits between consecutive grid points
            for m in range(m_hi, m_lo, -1):
                if m < 1:
                    continue
                target = m * math.pi
                e = optimize.brentq(
                    lambda x: self.theta_end(x) - target,
                    grid[i],
                    grid[i + 1],
                    xtol=1e-14,
                    rtol=ROOT_RTOL,
                )
                nodes = m - 1
                levels.append(
                    SpectralLevel(
                        n=nodes,
                        k=total - nodes,
                        e=e,
                        method=SolveMethod.ODE,
                        residual=abs(self.mismatch(e)),
                    )
                )
            if theta[i + 1] > theta[i] + 1e-9:
                logger.warning(
                    "θ(q_max) rises between E=%g and E=%g; levels may be missed",
                    grid[i],
                    grid[i + 1],
                )

        for lower, upper in zip(levels, levels[1:]):
            if lower.n - upper.n != 1:
                logger.warning(
                    "node counts jump from %d to %d between E=%g and E=%g (missed root?)",
                    lower.n,
                    upper.n,
                    lower.e,
                    upper.e,
                )
        logger.info("N=%d: %d ODE levels in (%g, %g)", self.n, len(levels), e_lo, e_hi)
        return levels


def default_e_range(n: int) -> tuple[float, float]:
    return DEFAULT_E_MIN, DEFAULT_TOP_FRACTION * q_max(n) ** 2


def solve_ode_spectrum(
    n: int,
    e_range: tuple[float, float] | None = None,
    *,
    rtol: float = DEFAULT_RTOL,
    threads: int = 1,
    grid_points: int | None = None,
) -> list[SpectralLevel]:
    return ShootingSolver(n, rtol=rtol, threads=threads).solve(e_range, grid_points)


def delta_coulomb(e: float | np.ndarray) -> float | np.ndarray:
    """Continuous phase Im log Γ(3/4 − iE/4); zero at E = 0."""
    if np.any(np.asarray(e) < 0):
        raise DomainError("the Coulomb phase is defined for E >= 0")
    value = np.imag(special.loggamma(0.75 - 0.25j * np.asarray(e, dtype=np.float64)))
    return float(value) if np.ndim(value) == 0 else value


def delta_coulomb_stirling(e: float, with_constant: bool = True) -> float:
    """Large-E form (E/4)(1 − ln(E/4)), optionally with its −π/8 constant."""
    value = 0.25 * e * (1.0 - math.log(0.25 * e))
    return value - math.pi / 8.0 if with_constant else value


@dataclass(frozen=True)
class PhaseParams:
    """Drift δ₀(E) = −A√N ln E − h₁."""

    a: float
    h1: float
    source: str = "formula"  # formula | fitted

    def __post_init__(self):
        if not math.isfinite(self.a) or self.a == 0:
            raise DomainError(f"A must be finite and non-zero, got {self.a}")

    @classmethod
    def from_formula(cls, n: int, cardinality: int, gamma: float) -> PhaseParams:
        """A = πF/(√N ln(1/γ)), h₁ = πκ₁."""
        log_inv = math.log(1.0 / gamma)
        return cls(
            a=math.pi * cardinality / (math.sqrt(n) * log_inv),
            h1=math.pi * kappa1_series(gamma),
            source="formula",
        )


def _phase_target(e: np.ndarray | float, n: int, nodes: np.ndarray | int):
    """δ_Coul(E) + N/128 − (E/4) ln(N/64) − nπ: the part of the residual free of A, h₁."""
    return delta_coulomb(e) + n / 128.0 - 0.25 * e * math.log(n / 64.0) - nodes * math.pi


def phase_residual(e: float, n: int, nodes: int, params: PhaseParams) -> float:
    """Zero at a level with ``nodes`` nodes."""
    drift = -params.a * math.sqrt(n) * math.log(e) - params.h1
    return float(_phase_target(e, n, nodes)) + drift


def fit_phase_params(n: int, levels: Iterable[SpectralLevel]) -> tuple[PhaseParams, float]:
    """Least-squares (A, h₁) making the phase residual vanish on given levels.

    Returns the parameters and the RMS residual of the fit.
    """
    levels = list(levels)
    if len(levels) < 2:
        raise DomainError("fitting A and h₁ needs at least two levels")
    e = np.array([lvl.e for lvl in levels])
    nodes = np.array([lvl.n for lvl in levels])
    design = np.column_stack([math.sqrt(n) * np.log(e), np.ones_like(e)])
    target = _phase_target(e, n, nodes)
    (a, h1), *_ = np.linalg.lstsq(design, target, rcond=None)
    params = PhaseParams(a=float(a), h1=float(h1), source="fitted")
    if params.a < 0:
        logger.warning("fitted drift slope A=%g is negative on these levels", params.a)
    return params, rms_residual(n, levels, params)


def rms_residual(n: int, levels: Iterable[SpectralLevel], params: PhaseParams) -> float:
    values = [phase_residual(lvl.e, n, lvl.n, params) for lvl in levels]
    return math.sqrt(sum(v * v for v in values) / len(values)) if values else 0.0


def reduced_root(k: int, n: int, params: PhaseParams) -> float:
    """Bohr-Sommerfeld form (√N/π) ln E = (k − h₁/π)/A solved for E."""
    try:
        return math.exp((math.pi * k - params.h1) / (params.a * math.sqrt(n)))
    except OverflowError:
        return math.inf


def phase_spectrum(
    n: int,
    params: PhaseParams,
    k_range: Iterable[int] | None = None,
    e_range: tuple[float, float] | None = None,
) -> list[SpectralLevel]:
    """One level per k (n = ⌊N/128π⌋ − k), ascending in E.

    Roots are bracketed on a logarithmic E grid; the largest-E root is kept.
    A k without a root is logged and skipped.
    """
    total = level_count(n)
    e_lo, e_hi = e_range or (1e-3, q_max(n) ** 2)
    grid = np.geomspace(e_lo, e_hi, PHASE_GRID_POINTS)
    drift = -params.a * math.sqrt(n) * np.log(grid) - params.h1
    base = _phase_target(grid, n, 0) + drift
    if k_range is None:
        k_range = range(1, total + 1)

    levels: list[SpectralLevel] = []
    for k in k_range:
        nodes = total - k
        if nodes < 0:
            logger.warning("k=%d exceeds the level count %d", k, total)
            continue
        values = base - nodes * math.pi
        crossings = np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) <= 0)
        if not len(crossings):
            logger.warning("no phase root for n=%d (k=%d) in (%g, %g)", nodes, k, e_lo, e_hi)
            continue
        i = int(crossings[-1])
        e = optimize.brentq(
            phase_residual, grid[i], grid[i + 1], args=(n, nodes, params), rtol=ROOT_RTOL
        )
        levels.append(
            SpectralLevel(
                n=nodes,
                k=k,
                e=e,
                method=SolveMethod.PHASE,
                residual=abs(phase_residual(e, n, nodes, params)),
                e_reduced=reduced_root(k, n, params),
            )
        )
    levels.sort(key=lambda lvl: lvl.e)
    return levels


@dataclass(frozen=True)
class LevelPair:
    n: int
    k: int
    e_ode: float | None
    e_phase: float | None
    residual: float | None

    @property
    def rel_gap(self) -> float | None:
        if self.e_ode is None or self.e_phase is None:
            return None
        return abs(self.e_phase - self.e_ode) / self.e_ode


def cross_validate(
    ode_levels: Iterable[SpectralLevel], phase_levels: Iterable[SpectralLevel]
) -> list[LevelPair]:
    """Match levels on node count; rows ordered by descending n (ascending E)."""
    ode = {lvl.n: lvl for lvl in ode_levels}
    phase = {lvl.n: lvl for lvl in phase_levels}
    pairs = []
    for nodes in sorted(set(ode) | set(phase), reverse=True):
        a, b = ode.get(nodes), phase.get(nodes)
        ref = a or b
        pairs.append(
            LevelPair(
                n=nodes,
                k=ref.k,
                e_ode=a.e if a else None,
                e_phase=b.e if b else None,
                residual=a.residual if a else b.residual,
            )
        )
    return pairs


def top_half(levels: list[SpectralLevel]) -> list[SpectralLevel]:
    """Upper half of a level list by E."""
    ordered = sorted(levels, key=lambda lvl: lvl.e)
    return ordered[len(ordered) // 2 :]
