from __future__ import annotations

import contextlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import pandas as pd
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table
from threadpoolctl import threadpool_limits

from sconcord import __version__
from sconcord.config import settings
from sconcord.errors import IncompatibleRunError, InstanceFormatError, SconcordError
from sconcord.model.schemas import BenchGrid, MethodKind, ProblemKind, RunSpec
from sconcord.service.bench_service import BenchService
from sconcord.service.instance_service import InstanceService
from sconcord.service.run_service import RunService
from sconcord.service.verification_service import SCOPES, VerificationService

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="sconcord",
    help="Second-order methods for reference-based self-concordant objectives.",
    no_args_is_help=True,
    add_completion=False,
)
console = Console()

EXIT_FAILURE = 1
EXIT_USAGE = 2


@app.callback()
def main(
    log_level: str = typer.Option(settings.SCONCORD_LOG_LEVEL, help="Logging level."),
) -> None:
    logging.basicConfig(
        level=log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@contextlib.contextmanager
def _numerics(deterministic: bool) -> Iterator[None]:
    if not deterministic:
        yield
        return
    with threadpool_limits(limits=1):
        yield


def _read_json(path: Optional[Path], what: str) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise typer.BadParameter(f"cannot read {what} {path}: {e}")
    if not isinstance(payload, dict):
        raise typer.BadParameter(f"{what} {path} must hold a JSON object")
    return payload


def _parse_params(pairs: List[str]) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise typer.BadParameter(f"expected key=value, got {pair!r}", param_hint="--param")
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def _generator_block(
    m: Optional[int], n: Optional[int], r: Optional[int], noise: Optional[float], extra: List[str]
) -> Dict[str, Any]:
    block = {k: v for k, v in {"m": m, "n": n, "r": r, "noise": noise}.items() if v is not None}
    block.update(_parse_params(extra))
    return block


def _usage_error(e: Exception) -> typer.Exit:
    console.print(f"[red]usage error:[/red] {e}")
    return typer.Exit(EXIT_USAGE)


@app.command()
def gen(
    problem: ProblemKind = typer.Argument(..., help="Problem family."),
    seed: int = typer.Option(0, help="Generator seed."),
    m: Optional[int] = typer.Option(None, help="Rows (NMF) or measurements (phase retrieval)."),
    n: Optional[int] = typer.Option(None, help="Columns (NMF) or signal dimension."),
    r: Optional[int] = typer.Option(None, help="NMF rank."),
    noise: Optional[float] = typer.Option(None, help="Noise level."),
    param: List[str] = typer.Option([], help="Extra generator parameter as key=value."),
    out: Optional[Path] = typer.Option(None, help="Instance stem (files <stem>.json, .npy)."),
) -> None:
    """Generate a problem instance and write it with its JSON sidecar."""
    block = _generator_block(m, n, r, noise, param)
    service = InstanceService()
    try:
        path = service.generate(problem, seed, block, stem=out)
    except (ValueError, TypeError) as e:
        raise _usage_error(e)
    except OSError as e:
        console.print(f"[red]cannot write instance:[/red] {e}")
        raise typer.Exit(EXIT_FAILURE)
    console.print(f"wrote {path}")


@app.command()
def solve(
    problem: ProblemKind = typer.Argument(..., help="Problem family."),
    method: MethodKind = typer.Argument(..., help="Solver."),
    seed: int = typer.Option(0, help="Instance and start-point seed."),
    config: Optional[Path] = typer.Option(None, help="JSON file with the solver block."),
    instance: Optional[Path] = typer.Option(None, help="Stored instance (stem or sidecar)."),
    m: Optional[int] = typer.Option(None, help="Generator size m."),
    n: Optional[int] = typer.Option(None, help="Generator size n."),
    r: Optional[int] = typer.Option(None, help="Generator rank r."),
    noise: Optional[float] = typer.Option(None, help="Generator noise."),
    param: List[str] = typer.Option([], help="Extra generator parameter as key=value."),
    out: Optional[Path] = typer.Option(None, help="Directory for report.json and trace.csv."),
    deterministic: bool = typer.Option(False, help="Single-threaded BLAS for bit-exact runs."),
) -> None:
    """Run one solver and write the report JSON and trace CSV."""
    try:
        spec = RunSpec(
            problem=problem,
            method=method,
            seed=seed,
            solver=_read_json(config, "solver config"),
            generator=_generator_block(m, n, r, noise, param),
            instance_path=str(instance) if instance else None,
            output_dir=str(out) if out else None,
        )
        with _numerics(deterministic):
            outcome = RunService().run(spec)
    except (IncompatibleRunError, ValidationError, InstanceFormatError) as e:
        raise _usage_error(e)
    except SconcordError as e:
        console.print(f"[red]run failed:[/red] {e}")
        raise typer.Exit(EXIT_FAILURE)

    report = outcome.report
    table = Table(title=report.run_id, show_header=False)
    table.add_row("status", report.status)
    table.add_row("final f", f"{report.final_f:.10e}")
    gap = report.optimality_gap
    table.add_row("gap", f"{gap:.3e}" if gap is not None else "n/a")
    table.add_row("final nu", f"{report.final_nu:.3e}" if report.final_nu is not None else "n/a")
    table.add_row("iterations", str(report.iterations))
    table.add_row("hvp count", str(report.hvp_count))
    table.add_row("report", str(outcome.report_path))
    table.add_row("trace", str(outcome.trace_path))
    console.print(table)
    if not outcome.succeeded:
        raise typer.Exit(EXIT_FAILURE)


@app.command()
def verify(
    scope: str = typer.Argument("all", help=f"One of {', '.join(SCOPES)} or all."),
    seed: int = typer.Option(0, help="Sampling seed."),
) -> None:
    """Run the invariant suites and print worst-case margins."""
    if scope != "all" and scope not in SCOPES:
        raise typer.BadParameter(f"unknown scope {scope!r}", param_hint="SCOPE")
    suites = VerificationService(seed=seed).run(scope)  # type: ignore[arg-type]
    table = Table(title=f"sconcord {__version__} verify {scope}")
    for column in ("suite", "check", "worst", "threshold", "result"):
        table.add_column(column)
    for suite in suites:
        for check in suite.checks:
            table.add_row(
                suite.scope,
                check.name,
                f"{check.worst:.3e}",
                f"{check.threshold:.3e}",
                "[green]pass[/green]" if check.passed else f"[red]FAIL[/red] {check.detail}",
            )
    console.print(table)
    if not all(s.passed for s in suites):
        raise typer.Exit(EXIT_FAILURE)


@app.command()
def bench(
    grid: Optional[Path] = typer.Option(None, help="JSON grid file (BenchGrid)."),
    problem: Optional[ProblemKind] = typer.Option(None, help="Problem, when no grid file."),
    method: List[MethodKind] = typer.Option([], help="Method (repeatable)."),
    seeds: int = typer.Option(5, help="Seeds 0..seeds-1, when no grid file."),
    out: Optional[Path] = typer.Option(None, help="Output directory."),
    baselines: Optional[Path] = typer.Option(None, help="Directory of external baseline CSVs."),
    deterministic: bool = typer.Option(False, help="One worker, single-threaded BLAS."),
) -> None:
    """Run a methods x seeds x sizes grid and write the per-run and aggregate tables."""
    try:
        if grid is not None:
            bench_grid = BenchGrid(**_read_json(grid, "grid"))
        elif problem is not None and method:
            bench_grid = BenchGrid(problem=problem, methods=method, seeds=list(range(seeds)))
        else:
            raise typer.BadParameter("give --grid, or --problem with at least one --method")
        out_dir = out or settings.SCONCORD_OUTPUT_DIR / f"bench-{bench_grid.problem.value}"
        service = BenchService(max_concurrency=1 if deterministic else None)
        with _numerics(deterministic):
            tables = service.run(bench_grid, out_dir, baselines)
    except (IncompatibleRunError, ValidationError) as e:
        raise _usage_error(e)

    console.print(f"wrote {tables.runs_path} and {tables.aggregate_path}")
    if tables.runs.empty:
        console.print("[red]no run finished[/red]")
        raise typer.Exit(EXIT_FAILURE)
    summary = Table(title="final status per run")
    for column in ("size", "method", "seed", "status", "final_f", "gap"):
        summary.add_column(column)
    for row in tables.runs.itertuples(index=False):
        gap = row.optimality_gap
        summary.add_row(
            str(row.size),
            str(row.method),
            str(row.seed),
            str(row.status),
            f"{row.final_f:.6e}",
            "n/a" if pd.isna(gap) else f"{gap:.3e}",
        )
    console.print(summary)


if __name__ == "__main__":
    app()
