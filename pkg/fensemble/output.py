"""File writers: CSV tables, key=value model dumps, JSON summaries."""

from __future__ import annotations

import csv
from collections.abc import Iterable, Sequence
from pathlib import Path

import orjson

from fensemble.asymptotics import QmModel
from fensemble.ensemble import CardinalityReport, Ensemble
from fensemble.piqm import ConvergenceReport, SweepResult
from fensemble.spectrum import LevelPair
from fensemble.utils import fmt_real

ENSEMBLE_COLUMNS = ("N_sigma", "x", "y", "pi_x", "pi_y", "E", "p", "q", "t", "u", "k", "kappa")
SPECTRUM_COLUMNS = ("n", "k", "E_ode", "E_phase", "residual")
PIQM_COLUMNS = (
    "x",
    "pi_exact",
    "pi_qm",
    "pi_qm_asym",
    "u",
    "E_qm",
    "rel_err",
    "pi_qm_asym_algebraic",
    "note",
)
CONVERGENCE_COLUMNS = ("N", "valid_points", "median_rel_err", "max_rel_err", "invalid_points")


def write_csv(
    output_path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[object]],
    metadata: Sequence[tuple[str, object]] = (),
) -> Path:
    """Write a CSV with optional ``# key=value`` lines above the header."""
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with output_path.open("w", encoding="utf-8", newline="") as fh:
        for key, value in metadata:
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return output_path


def save_text(content: str, output_path: Path) -> Path:
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(content, encoding="utf-8")
    return output_path


def save_json(data: dict, output_path: Path) -> Path:
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_bytes(
        orjson.dumps(data, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)
    )
    return output_path


def ensemble_rows(ensemble: Ensemble):
    for i in range(ensemble.cardinality):
        yield (
            int(ensemble.n_sigma[i]),
            int(ensemble.x[i]),
            int(ensemble.y[i]),
            int(ensemble.pi_x[i]),
            int(ensemble.pi_y[i]),
            fmt_real(ensemble.e[i]),
            fmt_real(ensemble.p[i]),
            fmt_real(ensemble.q[i]),
            fmt_real(ensemble.t[i]),
            fmt_real(ensemble.u[i]),
            int(ensemble.k[i]),
            fmt_real(ensemble.kappa[i]),
        )


def save_ensemble(
    ensemble: Ensemble,
    report: CardinalityReport,
    output_dir: Path,
    run_info: dict | None = None,
) -> list[Path]:
    """``ensemble.csv`` and ``ensemble_stats.json``. Returns saved paths."""
    stats = {**report.as_dict(), **(run_info or {})}
    return [
        write_csv(output_dir / "ensemble.csv", ENSEMBLE_COLUMNS, ensemble_rows(ensemble)),
        save_json(stats, output_dir / "ensemble_stats.json"),
    ]


def save_spectrum(
    pairs: Iterable[LevelPair],
    output_path: Path,
    run_metadata: Sequence[tuple[str, object]] = (),
) -> Path:
    rows = (
        (p.n, p.k, fmt_real(p.e_ode), fmt_real(p.e_phase), fmt_real(p.residual))
        for p in pairs
    )
    return write_csv(output_path, SPECTRUM_COLUMNS, rows, run_metadata)


def model_metadata(model: QmModel) -> list[tuple[str, object]]:
    ctx = model.context
    return [
        ("N", ctx.n),
        ("j", ctx.j),
        ("gamma", fmt_real(ctx.gamma)),
        ("alpha", fmt_real(model.alpha)),
        ("beta", fmt_real(model.beta)),
        ("kappa1", fmt_real(model.kappa1)),
        ("E1", fmt_real(model.e1)),
        ("F", fmt_real(model.cardinality)),
        ("cardinality_source", model.cardinality_source),
        ("validity_bound", fmt_real(model.validity_bound)),
    ]


def save_sweep(
    result: SweepResult,
    output_path: Path,
    run_metadata: Sequence[tuple[str, object]] = (),
) -> Path:
    """One π_QM table; the model goes into ``#`` metadata lines."""
    metadata = model_metadata(result.model) if result.model else [("N", result.n), ("error", result.error)]
    metadata += run_metadata
    rows = (
        (
            r.x,
            r.pi_exact,
            fmt_real(r.pi_qm),
            fmt_real(r.pi_qm_asymptotic),
            fmt_real(r.u),
            fmt_real(r.e_qm),
            fmt_real(r.rel_err),
            fmt_real(r.pi_qm_algebraic),
            r.note,
        )
        for r in result.rows
    )
    return write_csv(output_path, PIQM_COLUMNS, rows, metadata)


def save_convergence(
    report: ConvergenceReport,
    output_path: Path,
    run_metadata: Sequence[tuple[str, object]] = (),
) -> Path:
    """Per-N statistics over the x values valid at every N."""
    xs = set(report.common_x)
    rows = (
        (
            r.n,
            len([row for row in r.valid_rows if row.x in xs]),
            fmt_real(r.median_rel_err(xs)),
            fmt_real(r.max_rel_err(xs)),
            r.invalid_points,
        )
        for r in report.results
    )
    metadata = [
        ("common_x", f"{min(xs)}..{max(xs)}" if xs else ""),
        ("non_increasing", str(report.non_increasing).lower()),
        ("strictly_decreasing", str(report.strictly_decreasing).lower()),
    ]
    metadata += run_metadata
    return write_csv(output_path, CONVERGENCE_COLUMNS, rows, metadata)
