#!/usr/bin/env python3
"""
HARQ-EH CLI

Minimum expected number of HARQ-IR re-transmissions for a receiver that
runs on harvested RF energy.

Usage:
    harq-eh solve --lambda 0.5 --r1 10 --r2 1 --e 1 --ed 5
    harq-eh table1 --episodes 100000
    harq-eh policy-grid --scenario fig1 --tie-break mark
    harq-eh verify --suite lemma1
    harq-eh estimate --scenario kconfig --policy if
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import click
import numpy as np
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    SpinnerColumn,
    TaskProgressColumn,
    TextColumn,
    TimeRemainingColumn,
)
from rich.table import Table

from . import __version__
from .absorption import mean_absorption_times
from .config_loader import (
    AppSettings,
    available_scenarios,
    load_config_file,
    load_settings,
    resolve_link,
    split_link_keys,
)
from .csv_logger import log_run
from .errors import HarqError
from .experiments import HEURISTICS, reproduce_table
from .montecarlo import estimate
from .policies import parse_policy_spec
from .result_writer import (
    SUITE_HEADER,
    VALUE_TABLE_HEADER,
    csv_text,
    grid_header,
    grid_rows,
    json_text,
    suite_rows,
    value_table_rows,
    write_result,
)
from .solver import decision_grid, value_iteration_discounted, value_iteration_ssp
from .types import LatticeState, LinkConfig, SuiteReport, TableResult, TieBreak
from .utils import get_output_dir
from .verify import SUITES, run_suite, suite_configs

console = Console()
EXIT_VERIFY_FAILED = 1
GRID_STYLES = {"EH": "blue", "ID": "red", "TIE": "magenta", "ABSORB": "dim"}


@dataclass
class CliState:
    """Options of the command group, shared with every subcommand."""
    output: Optional[Path]

    def output_dir(self) -> Path:
        return get_output_dir(self.output)


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def link_options(fn: Callable) -> Callable:
    """Attach the link-parameter flags shared by several commands."""
    options = [
        click.option("--lambda", "lambda_", type=float, help="P[GOOD channel]"),
        click.option("--r1", type=float, help="Message rate / GOOD-slot information (bits)"),
        click.option("--r2", type=float, help="BAD-slot information (bits)"),
        click.option("--e", "e", type=int, help="Energy units harvested in a GOOD slot"),
        click.option("--ed", "e_d", type=int, help="Energy needed for a decoding attempt"),
        click.option("--bmax", "b_max", type=int, help="Battery capacity (default e_d + 4e)"),
        click.option("--scenario", "-s", help="Named scenario from config/scenarios"),
        click.option(
            "--config", "config_file", type=click.Path(exists=True, dir_okay=False),
            help="YAML or key=value file; flags override it",
        ),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def format_option(fn: Callable) -> Callable:
    return click.option(
        "--format", "fmt", type=click.Choice(["csv", "json"]), default=None,
        help="Result file format (default csv)",
    )(fn)


def _pick(*values: Any) -> Any:
    """First value that is not None."""
    return next((v for v in values if v is not None), None)


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item.get("loc", ())) or "config"
        parts.append(f"{where}: {item.get('msg')}")
    return "; ".join(parts)


def load_inputs(
    scenario: Optional[str],
    config_file: Optional[str],
    link_flags: Optional[dict[str, Any]] = None,
    need_link: bool = True,
) -> tuple[AppSettings, dict[str, Any], Optional[LinkConfig]]:
    """
    Settings, non-link config-file values and the resolved link.

    Raises:
        click.UsageError: For unknown scenarios, unreadable files or invalid parameters
    """
    try:
        settings = load_settings(scenario)
        file_values = load_config_file(Path(config_file)) if config_file else {}
        link = resolve_link(settings, file_values, link_flags) if need_link else None
    except FileNotFoundError as e:
        known = ", ".join(available_scenarios())
        raise click.UsageError(f"{e} (known scenarios: {known})")
    except ValidationError as e:
        raise click.UsageError(f"Invalid parameters: {_validation_message(e)}")
    except ValueError as e:
        raise click.UsageError(str(e))
    return settings, split_link_keys(file_values)[1], link


def _command_line(ctx: click.Context) -> str:
    args = [
        f"--{k.rstrip('_').replace('_', '-')}={v}"
        for k, v in sorted(ctx.params.items())
        if v is not None and v is not False
    ]
    return " ".join([ctx.command_path, *args])


def run_logged(
    ctx: click.Context,
    label: str,
    seed: Optional[int],
    body: Callable[[], int],
) -> None:
    """Run a command body, log it to the daily run log and exit with its code."""
    state: CliState = ctx.obj
    command = ctx.info_name or "harq-eh"
    start_time = time.time()
    status, error, code = "SUCCESS", "", 0
    try:
        code = body()
        if code:
            status = "FAILED"
    except HarqError as e:
        status, error, code = "ERROR", str(e), 1
        console.print(f"[red]{type(e).__name__}: {escape(str(e))}[/red]")
    except click.ClickException as e:
        status, error = "ERROR", e.format_message()
        raise
    finally:
        log_run(state.output_dir(), command, label, seed, status, time.time() - start_time, error)
    if code:
        ctx.exit(code)


def _mc_progress() -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        MofNCompleteColumn(),
        TimeRemainingColumn(),
        console=console,
    )


def _write(
    ctx: click.Context,
    name: str,
    fmt: str,
    body: str,
    config: dict[str, Any],
    seed: Optional[int] = None,
) -> None:
    result_path, manifest_path = write_result(
        ctx.obj.output_dir(), name, body, fmt, _command_line(ctx), config, seed
    )
    console.print(f"[green]Output: {result_path}[/green]")
    console.print(f"[dim]Manifest: {manifest_path}[/dim]")


@click.group()
@click.option("--output", "-o", type=click.Path(file_okay=False), help="Output directory")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.version_option(__version__, prog_name="harq-eh")
@click.pass_context
def cli(ctx: click.Context, output: Optional[str], verbose: bool):
    """
    Expected HARQ-IR re-transmissions with an RF energy harvesting receiver.

    \b
    Exit codes:
        0  success
        1  verification failure or computation error
        2  usage error
    """
    setup_logging(verbose)
    ctx.obj = CliState(output=Path(output) if output else None)


@cli.command()
@link_options
@click.option("--tol", type=float, help="Value iteration tolerance")
@click.option("--sweep", type=click.Choice(["jacobi", "gauss-seidel"]), help="Sweep order")
@click.option("--beta", type=float, help="Solve the discounted problem with this factor instead")
@format_option
@click.pass_context
def solve(ctx, lambda_, r1, r2, e, e_d, b_max, scenario, config_file, tol, sweep, beta, fmt):
    """
    Value iteration: k(b,m), q_eh, q_id and ties on the whole lattice.

    \b
    Example:
        harq-eh solve --lambda 0.5 --r1 10 --r2 1 --e 1 --ed 5
    """
    flags = dict(lambda_=lambda_, r1=r1, r2=r2, e=e, e_d=e_d, b_max=b_max)
    settings, extra, cfg = load_inputs(scenario, config_file, flags)
    fmt = _pick(fmt, extra.get("format"), "csv")
    solver = settings.solver

    def body() -> int:
        console.print(f"[blue]Solving {cfg.label()}[/blue]")
        if beta is not None:
            vt = value_iteration_discounted(
                cfg, beta, tol=_pick(tol, solver.tol), max_iter=solver.max_iter, tie_tol=solver.tie_tol
            )
        else:
            vt = value_iteration_ssp(
                cfg, tol=_pick(tol, solver.tol), max_iter=solver.max_iter,
                tie_tol=solver.tie_tol, sweep=_pick(sweep, solver.sweep),
            )
        rows = value_table_rows(cfg, vt.k, vt.q_eh, vt.q_id, vt.ties)
        if fmt == "csv":
            text = csv_text(VALUE_TABLE_HEADER, rows)
        else:
            text = json_text({
                "config": cfg.model_dump(by_alias=True),
                "k00": vt.k00,
                "iterations": vt.iterations,
                "residual": vt.residual,
                "beta": vt.beta,
                "cells": [dict(zip(VALUE_TABLE_HEADER, row)) for row in rows],
            })
        _write(ctx, "value_table", fmt, text, cfg.model_dump(by_alias=True))
        console.print(
            f"[green]k(0,0) = {vt.k00:.6f}[/green] "
            f"[dim]({vt.iterations} sweeps, residual {vt.residual:.1e}, {int(vt.ties.sum())} ties)[/dim]"
        )
        return 0

    run_logged(ctx, cfg.label(), None, body)


def _print_table(result: TableResult) -> None:
    table = Table(title=f"{result.name}: expected re-transmissions")
    table.add_column("Policy", style="bold")
    for label in result.column_labels():
        table.add_column(label, justify="right")
    for row in result.rows:
        cells = []
        for cell in row.cells:
            text = f"{cell.mean:.4f}"
            if cell.stderr > 0:
                text += f" ±{cell.stderr:.3f}"
            if cell.reference is not None and result.reference_tolerance is not None:
                ok = abs(cell.mean - cell.reference) <= result.reference_tolerance + 4 * cell.stderr
                text = f"[{'green' if ok else 'yellow'}]{text}[/]"
            cells.append(text)
        table.add_row(row.policy, *cells)
    console.print(table)


def _table_command(ctx, name, episodes, full_protocol, seed, lanes, fmt) -> None:
    settings, _, _ = load_inputs(name, None, need_link=False)
    mc = settings.montecarlo
    n_episodes = mc.full_episodes if full_protocol else _pick(episodes, mc.episodes)
    seed = _pick(seed, mc.seed)
    lanes = _pick(lanes, mc.lanes)
    fmt = fmt or "csv"
    scenario = settings.scenario

    def body() -> int:
        console.print(f"[blue]{scenario.description}[/blue]")
        n_cols = len(scenario.sweep.values)
        with _mc_progress() as progress:
            task_id = progress.add_task(
                f"Simulating {', '.join(h.upper() for h in HEURISTICS)}...",
                total=n_cols * len(HEURISTICS) * n_episodes,
            )
            result = reproduce_table(
                scenario, n_episodes, seed, lanes, settings.solver,
                on_progress=lambda n: progress.advance(task_id, n),
            )
        _print_table(result)

        if fmt == "csv":
            rows = [[row.policy, *[c.mean for c in row.cells]] for row in result.rows]
            text = csv_text(["policy", *result.column_labels()], rows)
        else:
            text = json_text(result.model_dump())
        config = {"scenario": name, "link": scenario.link, "sweep": scenario.sweep.model_dump(),
                  "episodes": n_episodes}
        _write(ctx, name, fmt, text, config, seed)
        return 0

    run_logged(ctx, name, seed, body)


def table_options(fn: Callable) -> Callable:
    options = [
        click.option("--episodes", "-n", type=click.IntRange(min=1), help="Monte Carlo episodes per cell"),
        click.option("--full-protocol", is_flag=True, help="Use 10^7 episodes per cell"),
        click.option("--seed", type=int, help="Master seed"),
        click.option("--lanes", type=click.IntRange(min=1), help="Worker threads"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return format_option(fn)


@cli.command()
@table_options
@click.pass_context
def table1(ctx, episodes, full_protocol, seed, lanes, fmt):
    """Expected re-transmissions vs r2 (r1=10, e=1, e_d=5, lambda=0.5)."""
    _table_command(ctx, "table1", episodes, full_protocol, seed, lanes, fmt)


@cli.command()
@table_options
@click.pass_context
def table2(ctx, episodes, full_protocol, seed, lanes, fmt):
    """Expected re-transmissions vs lambda (r1=10, r2=5, e=2, e_d=5)."""
    _table_command(ctx, "table2", episodes, full_protocol, seed, lanes, fmt)


def _print_grid(cfg: LinkConfig, grid: np.ndarray) -> None:
    table = Table(title=f"Optimal decisions [{cfg.label()}]")
    for label in grid_header(cfg):
        table.add_column(label, justify="center")
    for b in range(grid.shape[0] - 1, -1, -1):
        cells = [f"[{GRID_STYLES[c]}]{c}[/]" for c in grid[b]]
        table.add_row(str(b), *cells)
    console.print(table)


@cli.command("policy-grid")
@link_options
@click.option(
    "--tie-break", type=click.Choice([t.value for t in TieBreak]), default=None,
    help="How EH/ID ties are shown (default mark)",
)
@format_option
@click.pass_context
def policy_grid(ctx, lambda_, r1, r2, e, e_d, b_max, scenario, config_file, tie_break, fmt):
    """
    b x m grid of optimal decisions (ABSORB, EH, ID, TIE).

    \b
    Example:
        harq-eh policy-grid --scenario fig1 --tie-break prefer-id
    """
    flags = dict(lambda_=lambda_, r1=r1, r2=r2, e=e, e_d=e_d, b_max=b_max)
    settings, extra, cfg = load_inputs(scenario, config_file, flags)
    fmt = _pick(fmt, extra.get("format"), "csv")
    tie_break = TieBreak(_pick(tie_break, extra.get("tie_break"), TieBreak.MARK.value))
    solver = settings.solver

    def body() -> int:
        vt = value_iteration_ssp(
            cfg, tol=solver.tol, max_iter=solver.max_iter, tie_tol=solver.tie_tol, sweep=solver.sweep
        )
        grid = decision_grid(vt, tie_break)
        _print_grid(cfg, grid)
        if fmt == "csv":
            text = csv_text(grid_header(cfg), grid_rows(grid))
        else:
            text = json_text({
                "config": cfg.model_dump(by_alias=True),
                "tie_break": tie_break.value,
                "columns": grid_header(cfg)[1:],
                "rows": [list(grid[b]) for b in range(grid.shape[0])],
            })
        _write(ctx, "policy_grid", fmt, text, {**cfg.model_dump(by_alias=True), "tie_break": tie_break.value})
        return 0

    run_logged(ctx, cfg.label(), None, body)


def _print_report(report: SuiteReport) -> None:
    table = Table(title=f"{report.suite} suite")
    table.add_column("Config")
    table.add_column("Margin", justify="right")
    table.add_column("Result")
    table.add_column("Detail", style="dim")
    for r in report.results:
        verdict = "[green]PASS[/green]" if r.passed else "[red]FAIL[/red]"
        table.add_row(r.config, f"{r.margin:.3g}", verdict, r.detail)
    console.print(table)


@cli.command()
@click.option(
    "--suite", type=click.Choice([*SUITES, "all"]), default="all", show_default=True,
    help="Invariant suite to run",
)
@link_options
@click.option("--rollouts", type=click.IntRange(min=2), help="Rollouts per arm in the deviation suite")
@click.option("--full-protocol", is_flag=True, help="Use 10^6 rollouts per arm")
@click.option("--lanes", type=click.IntRange(min=1), help="Worker threads")
@format_option
@click.pass_context
def verify(ctx, suite, lambda_, r1, r2, e, e_d, b_max, scenario, config_file,
           rollouts, full_protocol, lanes, fmt):
    """
    Run invariant suites over the built-in config matrices.

    Link flags or --scenario replace the built-in matrix with that one config.

    \b
    Example:
        harq-eh verify --suite lemma1
        harq-eh verify --suite deviation --scenario fig1
    """
    flags = dict(lambda_=lambda_, r1=r1, r2=r2, e=e, e_d=e_d, b_max=b_max)
    explicit = scenario is not None or config_file is not None or any(v is not None for v in flags.values())
    settings, extra, cfg = load_inputs(scenario, config_file, flags, need_link=explicit)
    mc = settings.montecarlo
    n_rollouts = mc.full_rollouts if full_protocol else _pick(rollouts, mc.rollouts)
    lanes = _pick(lanes, extra.get("lanes"), mc.lanes)
    fmt = _pick(fmt, extra.get("format"), "csv")
    suites = list(SUITES) if suite == "all" else [suite]
    label = cfg.label() if cfg else "built-in"

    def body() -> int:
        failed = []
        for name in suites:
            configs = [cfg] if cfg else suite_configs(name, settings)
            with _mc_progress() as progress:
                task_id = progress.add_task(f"Verifying {name}...", total=len(configs))
                report = run_suite(
                    name, settings, configs, n_rollouts, lanes,
                    on_config=lambda _label: progress.advance(task_id),
                )
            _print_report(report)
            if fmt == "csv":
                text = csv_text(SUITE_HEADER, suite_rows(report))
            else:
                text = json_text({"suite": report.suite, "passed": report.passed,
                                  "results": [r.model_dump() for r in report.results]})
            _write(ctx, f"verify_{name}", fmt, text,
                   {"suite": name, "configs": label, "rollouts": n_rollouts}, mc.seed)
            if report.passed:
                console.print(f"[green]{name}: all {len(report.results)} check(s) passed[/green]")
            else:
                worst = report.worst
                console.print(f"[red]{name}: FAILED, worst {worst.config} (margin {worst.margin:.3g})[/red]")
                failed.append(name)
        return EXIT_VERIFY_FAILED if failed else 0

    run_logged(ctx, label, mc.seed, body)


@cli.command("estimate")
@link_options
@click.option("--policy", "-p", "policy_spec", default=None,
              help="bf[:threshold=N] | if | ct | tabular[:tie_break=...] (default tabular)")
@click.option("--episodes", "-n", type=click.IntRange(min=1), help="Monte Carlo episodes")
@click.option("--full-protocol", is_flag=True, help="Use 10^7 episodes")
@click.option("--seed", type=int, help="Master seed")
@click.option("--lanes", type=click.IntRange(min=1), help="Worker threads")
@format_option
@click.pass_context
def estimate_cmd(ctx, lambda_, r1, r2, e, e_d, b_max, scenario, config_file,
                 policy_spec, episodes, full_protocol, seed, lanes, fmt):
    """
    Monte Carlo estimate of one policy, next to its exact mean.

    \b
    Example:
        harq-eh estimate --scenario kconfig --policy if --episodes 100000
    """
    flags = dict(lambda_=lambda_, r1=r1, r2=r2, e=e, e_d=e_d, b_max=b_max)
    settings, extra, cfg = load_inputs(scenario, config_file, flags)
    mc = settings.montecarlo
    n_episodes = mc.full_episodes if full_protocol else _pick(episodes, extra.get("episodes"), mc.episodes)
    seed = _pick(seed, extra.get("seed"), mc.seed)
    lanes = _pick(lanes, extra.get("lanes"), mc.lanes)
    fmt = _pick(fmt, extra.get("format"), "csv")
    policy_spec = _pick(policy_spec, extra.get("policy"), "tabular")

    def body() -> int:
        try:
            policy = parse_policy_spec(policy_spec, cfg)
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="--policy")
        exact = mean_absorption_times(policy, cfg).value(LatticeState(0, 0))
        with _mc_progress() as progress:
            task_id = progress.add_task(f"Simulating {policy.spec}...", total=n_episodes)
            result = estimate(
                policy, cfg, n_episodes, seed, lanes=lanes,
                on_progress=lambda n: progress.advance(task_id, n),
            )
        low, high = result.ci95
        console.print(
            f"[green]{policy.spec}: {result.mean:.4f} ± {result.stderr:.4f} "
            f"(95% CI {low:.4f} .. {high:.4f})[/green]"
        )
        console.print(f"[blue]Exact mean time to absorption: {exact:.6f}[/blue]")
        payload = {**result.model_dump(), "exact": exact}
        if fmt == "csv":
            text = csv_text(
                ["policy", "mean", "stderr", "ci_low", "ci_high", "n_episodes", "seed", "exact"],
                [[result.policy_spec, result.mean, result.stderr, low, high,
                  result.n_episodes, result.master_seed, exact]],
            )
        else:
            text = json_text(payload)
        _write(ctx, "estimate", fmt, text,
               {**cfg.model_dump(by_alias=True), "policy": policy.spec, "episodes": n_episodes}, seed)
        return 0

    run_logged(ctx, cfg.label(), seed, body)


if __name__ == "__main__":
    cli()
