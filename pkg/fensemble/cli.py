"""fensemble CLI - Click command definitions and main entry point."""

from __future__ import annotations

import logging
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import Progress, SpinnerColumn, TextColumn

from fensemble import __version__
from fensemble.asymptotics import model_for_n
from fensemble.cache import EnsembleCache, SieveCache
from fensemble.config import (
    CONFIG_KEYS,
    DEFAULT_CEILING,
    DEFAULT_INTERVAL_BOUND,
    DEFAULT_RTOL,
    DEFAULT_SIEVE_LIMIT,
    RunConfig,
    default_threads,
    load_config_file,
)
from fensemble.ensemble import build_ensemble, cardinality_report, verify_identities
from fensemble.errors import (
    ConfigError,
    DomainError,
    IntegrationError,
    IntegrityError,
    ResourceLimitError,
)
from fensemble.output import (
    save_convergence,
    save_ensemble,
    save_spectrum,
    save_sweep,
    save_text,
)
from fensemble.piqm import convergence_sweep, sweep
from fensemble.primes import PrimeCounter
from fensemble.spectrum import (
    PhaseParams,
    cross_validate,
    fit_phase_params,
    level_count,
    phase_spectrum,
    solve_ode_spectrum,
    top_half,
)
from fensemble.utils import parse_count, parse_count_list

console = Console(stderr=True)
logger = logging.getLogger(__name__)


class BadInputError(click.ClickException):
    exit_code = 2


class ResourceExceededError(click.ClickException):
    exit_code = 3


class CheckFailedError(click.ClickException):
    exit_code = 4


@contextmanager
def _exit_codes() -> Iterator[None]:
    """Map library errors onto the CLI's exit codes."""
    try:
        yield
    except ResourceLimitError as exc:
        raise ResourceExceededError(str(exc)) from exc
    except (IntegrityError, IntegrationError) as exc:
        raise CheckFailedError(str(exc)) from exc
    except DomainError as exc:
        raise BadInputError(str(exc)) from exc


@contextmanager
def _spinner(description: str) -> Iterator[None]:
    with Progress(
        SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
        console=console, transient=True,
    ) as progress:
        progress.add_task(description=description, total=None)
        yield


class CountType(click.ParamType):
    """Integers written as 77, 10_000 or 1e10."""

    name = "count"

    def convert(self, value, param, ctx):
        if isinstance(value, int):
            return value
        try:
            return parse_count(str(value))
        except ValueError as exc:
            self.fail(str(exc), param, ctx)


class CountListType(click.ParamType):
    name = "counts"

    def convert(self, value, param, ctx):
        if isinstance(value, list):
            return value
        try:
            return parse_count_list(str(value))
        except ValueError as exc:
            self.fail(str(exc), param, ctx)


COUNT = CountType()
COUNT_LIST = CountListType()


def _load_config(ctx: click.Context, param: click.Parameter, value: str | None) -> None:
    if not value:
        return
    try:
        values = load_config_file(Path(value))
    except ConfigError as exc:
        raise click.BadParameter(str(exc), ctx=ctx, param=param) from exc
    unknown = sorted(set(values) - CONFIG_KEYS)
    if unknown:
        raise click.BadParameter(f"unknown keys: {', '.join(unknown)}", ctx=ctx, param=param)
    ctx.default_map = {**(ctx.default_map or {}), **values}


@dataclass
class Runtime:
    config: RunConfig
    counter: PrimeCounter
    ensemble_cache: EnsembleCache | None

    def output(self, name: str) -> Path:
        return self.config.output_dir / name

    @property
    def run_metadata(self) -> list[tuple[str, object]]:
        """Extra `#` lines for CSV outputs."""
        return [("seedless", "true")] if self.config.seedless else []


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _saved(paths: list[Path] | Path) -> None:
    for path in paths if isinstance(paths, list) else [paths]:
        console.print(f"[green]Saved:[/green] {path}")


@click.group()
@click.version_option(__version__, prog_name="fensemble")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False,
              help="key=value file with defaults for the options below (flags win)")
@click.option("-o", "--output", "output_dir", type=click.Path(file_okay=False), default=".",
              help="Output directory (default: current directory)")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None,
              help="Directory for sieve and ensemble caches")
@click.option("--threads", type=click.IntRange(1), default=default_threads,
              help="Worker threads (default: available cores)")
@click.option("--sieve-limit", type=COUNT, default=DEFAULT_SIEVE_LIMIT,
              help="Largest integer covered by the sieve table")
@click.option("--ceiling", type=COUNT, default=DEFAULT_CEILING,
              help="Largest argument accepted by prime counting")
@click.option("--interval-bound", type=COUNT, default=DEFAULT_INTERVAL_BOUND,
              help="Longest ensemble interval that will be factored")
@click.option("--rtol", type=float, default=DEFAULT_RTOL, help="ODE local tolerance")
@click.option("--limit-exponents", is_flag=True, default=False,
              help="Use α=2, β=1 instead of the interpolated fit")
@click.option("--include-squares/--exclude-squares", default=True,
              help="Count x(j)² as an ensemble member")
@click.option("--seedless", is_flag=True, default=False,
              help="Assert a run without random state and record it in the outputs")
@click.option("-v", "--verbose", is_flag=True, help="Verbose progress output")
@click.pass_context
def main(
    ctx: click.Context,
    output_dir: str,
    cache_dir: str | None,
    threads: int,
    sieve_limit: int,
    ceiling: int,
    interval_bound: int,
    rtol: float,
    limit_exponents: bool,
    include_squares: bool,
    seedless: bool,
    verbose: bool,
):
    """Factorization ensembles, their confined-oscillator spectrum and π_QM.

    \b
    Examples:
        fensemble sieve --limit 1e8 --nth 1000
        fensemble ensemble --N 77
        fensemble spectrum --N 10000 --method both
        fensemble piqm --N 1e10 --xmin 10 --xmax 10000
        fensemble piqm --compare-N 1e6,1e8,1e10
        fensemble model --N 1e8
    """
    _setup_logging(verbose)
    with _exit_codes():
        config = RunConfig(
            sieve_limit=sieve_limit,
            ceiling=ceiling,
            interval_bound=interval_bound,
            rtol=rtol,
            threads=threads,
            cache_dir=Path(cache_dir) if cache_dir else None,
            output_dir=Path(output_dir),
            limit_exponents=limit_exponents,
            include_squares=include_squares,
            seedless=seedless,
        ).validate()
    sieve_cache = SieveCache(config.cache_dir) if config.cache_dir else None
    ctx.obj = Runtime(
        config=config,
        counter=PrimeCounter(config.sieve_limit, config.ceiling, sieve_cache),
        ensemble_cache=EnsembleCache(config.cache_dir) if config.cache_dir else None,
    )


@main.command()
@click.option("--limit", type=COUNT, required=True, help="Count primes up to this value")
@click.option("--nth", type=COUNT, default=None, help="Also print the J-th prime")
@click.pass_obj
def sieve(rt: Runtime, limit: int, nth: int | None):
    """Print π(limit) and optionally the J-th prime."""
    with _exit_codes(), _spinner("Counting primes..."):
        count = rt.counter.pi(limit)
        prime = rt.counter.nth_prime(nth) if nth is not None else None
    click.echo(f"pi({limit})={count}")
    if prime is not None:
        click.echo(f"x({nth})={prime}")


@main.command()
@click.option("--N", "n", type=COUNT, required=True, help="Input integer (N >= 9)")
@click.pass_obj
def ensemble(rt: Runtime, n: int):
    """Enumerate F(j) and write ensemble.csv with its statistics."""
    cfg = rt.config
    with _exit_codes():
        with _spinner(f"Factoring the interval for N={n}..."):
            ens = build_ensemble(
                n,
                rt.counter,
                include_squares=cfg.include_squares,
                interval_bound=cfg.interval_bound,
                threads=cfg.threads,
                cache=rt.ensemble_cache,
            )
        with _spinner("Checking identities..."):
            verify_identities(ens, rt.counter)
            report = cardinality_report(ens, rt.counter)
        run_info = {"seedless": True} if cfg.seedless else None
        _saved(save_ensemble(ens, report, cfg.output_dir, run_info))
    click.echo(f"F={ens.cardinality}")


@main.command()
@click.option("--N", "n", type=COUNT, required=True, help="Input integer")
@click.option("--method", type=click.Choice(["ode", "phase", "both"]), default="both",
              help="ODE shooting, phase quantization, or both with fitted (A, h1)")
@click.option("--emin", type=float, default=None, help="Lower end of the E window")
@click.option("--emax", type=float, default=None, help="Upper end of the E window")
@click.option("--kmax", type=COUNT, default=None,
              help="Largest k for the phase method (default: min(level count, F))")
@click.option("--cardinality", type=click.Choice(["exact", "asymptote"]), default="asymptote",
              help="Source of F for the formula (A, h1)")
@click.pass_obj
def spectrum(
    rt: Runtime,
    n: int,
    method: str,
    emin: float | None,
    emax: float | None,
    kmax: int | None,
    cardinality: str,
):
    """Solve the confined-oscillator levels and write spectrum.csv."""
    if (emin is None) != (emax is None):
        raise click.UsageError("--emin and --emax go together")
    e_range = (emin, emax) if emin is not None else None
    ode_levels, phase_levels = [], []
    with _exit_codes():
        if method in ("ode", "both"):
            with _spinner(f"Shooting for N={n}..."):
                ode_levels = solve_ode_spectrum(
                    n, e_range, rtol=rt.config.rtol, threads=rt.config.threads
                )
        if method == "both":
            params, rms = fit_phase_params(n, top_half(ode_levels))
            logger.info("fitted A=%.6g h1=%.6g (rms %.3g)", params.a, params.h1, rms)
            k_range = sorted({lvl.k for lvl in ode_levels})
        elif method == "phase":
            qm = model_for_n(n, rt.counter, **_model_options(rt, cardinality))
            params = PhaseParams.from_formula(n, qm.cardinality, qm.gamma)
            top = min(level_count(n), int(qm.cardinality))
            k_range = range(1, min(top, kmax or top) + 1)
        if method in ("phase", "both"):
            with _spinner("Solving the phase condition..."):
                phase_levels = phase_spectrum(n, params, k_range, e_range)
        pairs = cross_validate(ode_levels, phase_levels)
        _saved(save_spectrum(pairs, rt.output("spectrum.csv"), rt.run_metadata))
    click.echo(f"levels={max(len(ode_levels), len(phase_levels))}")


@main.command()
@click.option("--N", "n", type=COUNT, default=None, help="Input integer")
@click.option("--xmin", type=COUNT, default=2, help="Smallest x (default 2)")
@click.option("--xmax", type=COUNT, default=1000, help="Largest x (default 1000)")
@click.option("--exact-pi", is_flag=True, help="Count π(N/x) exactly instead of Li")
@click.option("--compare-N", "compare_n", type=COUNT_LIST, default=None,
              help="Comma separated N ladder for a convergence report")
@click.option("--cardinality", type=click.Choice(["exact", "asymptote"]), default="asymptote",
              help="Source of F for the u↔κ fit")
@click.pass_obj
def piqm(
    rt: Runtime,
    n: int | None,
    xmin: int,
    xmax: int,
    exact_pi: bool,
    compare_n: list[int] | None,
    cardinality: str,
):
    """Tabulate π_QM(x;N) against π(x); write piqm.csv or a convergence report."""
    if n is None and not compare_n:
        raise click.UsageError("give --N or --compare-N")
    if xmin > xmax:
        raise click.UsageError("--xmin must not exceed --xmax")
    options = dict(
        _model_options(rt, cardinality), exact_pi=exact_pi, threads=rt.config.threads
    )
    x_grid = range(xmin, xmax + 1)
    with _exit_codes():
        if compare_n:
            with _spinner(f"Sweeping N={','.join(map(str, compare_n))}..."):
                report = convergence_sweep(x_grid, compare_n, rt.counter, **options)
            for result in report.results:
                _saved(save_sweep(result, rt.output(f"piqm_N{result.n}.csv"), rt.run_metadata))
            _saved(save_convergence(report, rt.output("convergence.csv"), rt.run_metadata))
            for result, median in zip(report.results, report.medians):
                click.echo(f"N={result.n} median_rel_err={median:.6g}")
            return
        with _spinner(f"Evaluating π_QM for N={n}..."):
            result = sweep(n, x_grid, rt.counter, **options)
        if result.model is None:
            raise BadInputError(result.error)
        _saved(save_sweep(result, rt.output("piqm.csv"), rt.run_metadata))
    click.echo(
        f"valid={result.valid_points} invalid={result.invalid_points} "
        f"median_rel_err={result.median_rel_err():.6g}"
    )


@main.command()
@click.option("--N", "n", type=COUNT, required=True, help="Input integer")
@click.option("--cardinality", type=click.Choice(["exact", "asymptote"]), default="asymptote",
              help="Source of F for the u↔κ fit")
@click.pass_obj
def model(rt: Runtime, n: int, cardinality: str):
    """Print the asymptotic model as key=value lines and save model.txt."""
    with _exit_codes():
        with _spinner(f"Building the model for N={n}..."):
            qm = model_for_n(n, rt.counter, **_model_options(rt, cardinality))
        text = qm.to_text()
        _saved(save_text(text, rt.output("model.txt")))
    click.echo(text, nl=False)


def _model_options(rt: Runtime, cardinality: str) -> dict:
    """Keyword arguments for model_for_n; the exact count needs the ensemble settings."""
    options: dict = {"cardinality": cardinality, "limit_exponents": rt.config.limit_exponents}
    if cardinality == "exact":
        options.update(
            include_squares=rt.config.include_squares,
            interval_bound=rt.config.interval_bound,
            cache=rt.ensemble_cache,
        )
    return options


if __name__ == "__main__":
    main()
