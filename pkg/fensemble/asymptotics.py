"""Asymptotic model of E along the ensemble: u(x;N), the u↔κ quadratic, κ₁, E₁, E_QM."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from fensemble.ensemble import Ensemble, PrimeContext, build_ensemble, cardinality_asymptote
from fensemble.errors import DomainError
from fensemble.primes import LI_CONVENTION, meissel_mertens_c
from fensemble.utils import fmt_real

logger = logging.getLogger(__name__)

CARDINALITY_SOURCES = ("exact", "asymptote")
ALPHA_RANGE = (1.5, 2.5)
BETA_RANGE = (0.5, 1.5)
RANGE_CHECK_MIN_N = 10**6
PAPER_LITERAL_ALPHA = 2.0
PAPER_LITERAL_BETA = 1.0
KAPPA_SLACK = 1e-12


def u_of_x(x: float, context: PrimeContext) -> float:
    """γ ln(√N/x) for 2 <= x <= √N."""
    if not 2 <= x <= context.sqrt_n:
        raise DomainError(f"u(x;N) needs 2 <= x <= √N = {context.sqrt_n:g}, got {x}")
    return context.gamma * math.log(context.sqrt_n / x)


def u_shortcut(x: float, gamma: float) -> float:
    """1 − γ(ln x − 1): u after replacing π(√N) by √N/ln √N."""
    return 1.0 - gamma * (math.log(x) - 1.0)


def e_li(u: float) -> float:
    """E from the prime number theorem: 1/(1 − u²), singular at |u| = 1."""
    if abs(u) >= 1:
        raise DomainError(f"E_Li is singular for |u| >= 1, got u={u}")
    return 1.0 / (1.0 - u * u)


def kappa3_anchor(context: PrimeContext, cardinality: float) -> float:
    """κ(3) = 1 − (5/6)√N / F: x = 3 occupies the top band of ranks."""
    return 1.0 - 5.0 * context.sqrt_n / (6.0 * cardinality)


def fit_u_kappa(context: PrimeContext, cardinality: float) -> tuple[float, float]:
    """Interpolate u(κ) = ακ − βκ² through (0, 0), (κ(3), u(3)), (1, u(2))."""
    k3 = kappa3_anchor(context, cardinality)
    if not 0 < k3 < 1:
        raise DomainError(
            f"degenerate anchor κ(3)={k3}: F={cardinality} must exceed (5/6)√N"
        )
    u3 = u_of_x(3, context)
    u2 = u_of_x(2, context)
    matrix = np.array([[k3, -k3 * k3], [1.0, -1.0]])
    alpha, beta = np.linalg.solve(matrix, np.array([u3, u2]))
    return float(alpha), float(beta)


def u_of_kappa(kappa: float, alpha: float, beta: float) -> float:
    return alpha * kappa - beta * kappa * kappa


def kappa_of_u(u: float, alpha: float, beta: float) -> float:
    """Root of βκ² − ακ + u = 0 on the branch through κ(0) = 0."""
    vertex = alpha * alpha / (4.0 * beta)
    if u > vertex:
        raise DomainError(f"u={u} lies above the vertex α²/4β = {vertex}")
    return alpha / (2.0 * beta) - math.sqrt(max(vertex - u, 0.0) * beta) / beta


def kappa1_series(gamma: float, c: float | None = None) -> float:
    """κ₁ ≃ (1/6)/ln(1/γ) + R/ln(1/γ)², R = (5/6)C; higher orders dropped."""
    if not 0 < gamma < 1:
        raise DomainError(f"γ must lie in (0, 1), got {gamma}")
    c = meissel_mertens_c() if c is None else c
    log_inv = math.log(1.0 / gamma)
    return (1.0 / 6.0) / log_inv + (5.0 / 6.0) * c / log_inv**2


def e1_alternative(context: PrimeContext, cardinality: float, kappa1: float) -> float:
    """E₁ = (1/3) γ^−(5√N/(6F) + κ₁), the direct relation between κ₁ and E₁."""
    exponent = 5.0 * context.sqrt_n / (6.0 * cardinality) + kappa1
    return context.gamma ** (-exponent) / 3.0


@dataclass(frozen=True)
class QmModel:
    context: PrimeContext
    cardinality: float
    cardinality_source: str
    alpha: float
    beta: float
    kappa1: float
    e1: float
    e1_alt: float
    r: float
    limit_exponents: bool = False

    @property
    def gamma(self) -> float:
        return self.context.gamma

    @property
    def u1(self) -> float:
        return u_of_kappa(self.kappa1, self.alpha, self.beta)

    @property
    def vertex(self) -> float:
        return self.alpha * self.alpha / (4.0 * self.beta)

    @property
    def e1_rel_gap(self) -> float:
        return abs(self.e1_alt - self.e1) / self.e1

    @property
    def validity_bound(self) -> float:
        return validity_bound(self)

    @property
    def anchors(self) -> tuple[tuple[float, float], ...]:
        """(κ, u) pairs the quadratic passes through."""
        ctx = self.context
        return (
            (0.0, 0.0),
            (kappa3_anchor(ctx, self.cardinality), u_of_x(3, ctx)),
            (1.0, u_of_x(2, ctx)),
        )

    def u_of_kappa(self, kappa: float) -> float:
        return u_of_kappa(kappa, self.alpha, self.beta)

    def kappa_of_u(self, u: float) -> float:
        return kappa_of_u(u, self.alpha, self.beta)

    def to_text(self) -> str:
        ctx = self.context
        (k0, u0), (k3, u3), (k2, u2) = self.anchors
        fields = [
            ("N", ctx.n),
            ("j", ctx.j),
            ("gamma", fmt_real(ctx.gamma)),
            ("x_j", ctx.x_j),
            ("x_j1", ctx.x_j1),
            ("F", fmt_real(self.cardinality)),
            ("cardinality_source", self.cardinality_source),
            ("limit_exponents", str(self.limit_exponents).lower()),
            ("alpha", fmt_real(self.alpha)),
            ("beta", fmt_real(self.beta)),
            ("C", fmt_real(ctx.c)),
            ("R", fmt_real(self.r)),
            ("kappa1", fmt_real(self.kappa1)),
            ("u_kappa1", fmt_real(self.u1)),
            ("E1", fmt_real(self.e1)),
            ("E1_alt", fmt_real(self.e1_alt)),
            ("E1_rel_gap", fmt_real(self.e1_rel_gap)),
            ("validity_bound", fmt_real(self.validity_bound)),
            ("anchor_sqrtN", f"{fmt_real(k0)},{fmt_real(u0)}"),
            ("anchor_x3", f"{fmt_real(k3)},{fmt_real(u3)}"),
            ("anchor_x2", f"{fmt_real(k2)},{fmt_real(u2)}"),
            ("li_convention", LI_CONVENTION),
        ]
        return "".join(f"{key}={value}\n" for key, value in fields)


def build_model(
    context: PrimeContext,
    cardinality: float,
    *,
    source: str = "exact",
    limit_exponents: bool = False,
) -> QmModel:
    """Fit (α, β), then pin E_QM to E_Li at κ₁."""
    if source not in CARDINALITY_SOURCES:
        raise DomainError(f"unknown cardinality source {source!r}")
    if limit_exponents:
        alpha, beta = PAPER_LITERAL_ALPHA, PAPER_LITERAL_BETA
    else:
        alpha, beta = fit_u_kappa(context, cardinality)
        if context.n >= RANGE_CHECK_MIN_N and not (
            ALPHA_RANGE[0] <= alpha <= ALPHA_RANGE[1] and BETA_RANGE[0] <= beta <= BETA_RANGE[1]
        ):
            logger.warning(
                "N=%d: fitted α=%.6g, β=%.6g outside the asymptotic ranges (F from %s)",
                context.n,
                alpha,
                beta,
                source,
            )

    kappa1 = kappa1_series(context.gamma, context.c)
    if not 0 < kappa1 < 1:
        raise DomainError(f"κ₁={kappa1} outside (0, 1) at γ={context.gamma}")
    u1 = u_of_kappa(kappa1, alpha, beta)
    if abs(u1) >= 1:
        raise DomainError(f"u(κ₁)={u1} reaches the E_Li pole")
    model = QmModel(
        context=context,
        cardinality=cardinality,
        cardinality_source=source,
        alpha=alpha,
        beta=beta,
        kappa1=kappa1,
        e1=e_li(u1),
        e1_alt=e1_alternative(context, cardinality, kappa1),
        r=5.0 / 6.0 * context.c,
        limit_exponents=limit_exponents,
    )
    logger.info(
        "N=%d: α=%.6g β=%.6g κ₁=%.6g E₁=%.6g (alt %.6g)",
        context.n,
        alpha,
        beta,
        kappa1,
        model.e1,
        model.e1_alt,
    )
    return model


def model_for_n(
    n: int,
    counter=None,
    *,
    cardinality: str = "asymptote",
    limit_exponents: bool = False,
    ensemble: Ensemble | None = None,
    **ensemble_kwargs,
) -> QmModel:
    """Context, F (enumerated or asymptotic) and the fitted model for one N."""
    if cardinality == "exact":
        if ensemble is None:
            ensemble = build_ensemble(n, counter, **ensemble_kwargs)
        context, f = ensemble.context, float(ensemble.cardinality)
    elif cardinality == "asymptote":
        context = ensemble.context if ensemble is not None else PrimeContext.from_n(n, counter)
        f = cardinality_asymptote(n, context.c)
    else:
        raise DomainError(f"unknown cardinality source {cardinality!r}")
    return build_model(context, f, source=cardinality, limit_exponents=limit_exponents)


def validity_bound(model: QmModel) -> float:
    """x < √N exp(−u(κ₁)/γ) keeps κ(u(x)) >= κ₁."""
    return model.context.sqrt_n * math.exp(-model.u1 / model.gamma)


def e_qm_of_u(u: float, model: QmModel) -> float:
    """E₁ γ^(κ₁ − κ(u)), defined for κ(u) >= κ₁ (boundary included)."""
    kappa = model.kappa_of_u(u)
    if kappa < model.kappa1 - KAPPA_SLACK:
        raise DomainError(f"κ(u)={kappa} below κ₁={model.kappa1}")
    return model.e1 * model.gamma ** (model.kappa1 - kappa)


def e_qm(x: float, model: QmModel) -> float:
    if not x < model.validity_bound:
        raise DomainError(f"x={x} outside the validity range x < {model.validity_bound:g}")
    return e_qm_of_u(u_of_x(x, model.context), model)


@dataclass(frozen=True)
class EnsembleComparison:
    used: int
    skipped: int
    median_rel_err: float
    max_rel_err: float


def compare_with_ensemble(model: QmModel, ensemble: Ensemble) -> EnsembleComparison:
    """|E_QM(x_σ) − E_σ|/E_σ over entries with κ >= κ₁ inside the validity range."""
    ctx = model.context
    x = ensemble.x.astype(np.float64)
    u = ctx.gamma * np.log(ctx.sqrt_n / x)
    usable = (ensemble.kappa >= model.kappa1) & (x < model.validity_bound) & (u <= model.vertex)
    u = u[usable]
    kappa = model.alpha / (2 * model.beta) - np.sqrt(
        np.maximum(model.vertex - u, 0.0) * model.beta
    ) / model.beta
    predicted = model.e1 * ctx.gamma ** (model.kappa1 - kappa)
    actual = ensemble.e[usable]
    rel = np.abs(predicted - actual) / actual
    skipped = int(len(usable) - usable.sum())
    if not len(rel):
        return EnsembleComparison(used=0, skipped=skipped, median_rel_err=math.nan, max_rel_err=math.nan)
    return EnsembleComparison(
        used=len(rel),
        skipped=skipped,
        median_rel_err=float(np.median(rel)),
        max_rel_err=float(rel.max()),
    )


@dataclass(frozen=True)
class DriftRow:
    n: int
    alpha: float
    beta: float

    @property
    def alpha_gap(self) -> float:
        return abs(self.alpha - PAPER_LITERAL_ALPHA)

    @property
    def beta_gap(self) -> float:
        return abs(self.beta - PAPER_LITERAL_BETA)


@dataclass(frozen=True)
class DriftReport:
    rows: tuple[DriftRow, ...]

    @property
    def alpha_monotone(self) -> bool:
        gaps = [row.alpha_gap for row in self.rows]
        return all(b <= a for a, b in zip(gaps, gaps[1:]))

    @property
    def beta_monotone(self) -> bool:
        gaps = [row.beta_gap for row in self.rows]
        return all(b <= a for a, b in zip(gaps, gaps[1:]))


def drift_report(models: Iterable[QmModel]) -> DriftReport:
    """Distance of (α, β) from (2, 1) along an increasing N ladder."""
    rows = tuple(
        DriftRow(n=m.context.n, alpha=m.alpha, beta=m.beta)
        for m in sorted(models, key=lambda m: m.context.n)
    )
    report = DriftReport(rows=rows)
    if not (report.alpha_monotone and report.beta_monotone):
        logger.info(
            "(α, β) do not approach (2, 1) monotonically over N=%s",
            ",".join(str(r.n) for r in rows),
        )
    return report
