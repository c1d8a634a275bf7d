#!/usr/bin/env python3
"""neurq - AI x DB query engine CLI."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import NoReturn, Optional

import typer
from rich.console import Console

from neurq.bench import BenchConfig, BenchReport, parse_sweep, run_bench, sweep
from neurq.config.types import NeurqConfig
from neurq.database import Database
from neurq.display import DisplayConfig, error_text, show_metrics, show_plan, show_rowset
from neurq.errors import ConfigError, NeurqError
from neurq.logs import configure_logging
from neurq.settings import load_settings

app = typer.Typer(
    name="neurq",
    help="Embeddable AI x DB query engine - PREDICT-extended SQL over one optimizer and executor.",
    add_completion=True,
    no_args_is_help=True,
    rich_markup_mode="rich",
    context_settings={"help_option_names": ["-h", "--help"]},
)

console = Console()


@dataclass
class CliState:
    """Global options shared by every subcommand."""

    config_path: Optional[Path] = None
    overrides: list[str] = field(default_factory=list)
    verbose: bool = False

    def settings(self) -> NeurqConfig:
        config = load_settings(self.config_path, self.overrides)
        level = "DEBUG" if self.verbose else config.logging.level
        configure_logging(level, config.logging.json)
        return config


def _state(ctx: typer.Context) -> CliState:
    return ctx.obj if isinstance(ctx.obj, CliState) else CliState()


def _fail(exc: BaseException) -> NoReturn:
    console.print(error_text(exc))
    raise typer.Exit(1)


def _open_db(state: CliState, manifest: Optional[Path]) -> Database:
    if manifest is not None and not manifest.exists():
        raise ConfigError(f"manifest not found: {manifest}")
    return Database.from_manifest(manifest, state.settings())


def split_statements(text: str) -> list[str]:
    """Split on semicolons outside single-quoted literals."""
    statements: list[str] = []
    current: list[str] = []
    quoted = False
    for ch in text:
        if ch == "'":
            quoted = not quoted
        if ch == ";" and not quoted:
            statements.append("".join(current))
            current = []
        else:
            current.append(ch)
    statements.append("".join(current))
    return [s.strip() for s in statements if s.strip()]


@app.callback()
def callback(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(
        None,
        "--config",
        help="Settings YAML overlaid on the packaged defaults",
    ),
    overrides: Optional[list[str]] = typer.Option(
        None,
        "--set",
        help="Override one setting, e.g. --set executor.engines=8 (repeatable)",
    ),
    verbose: bool = typer.Option(
        False,
        "--verbose",
        "-v",
        help="Debug logging to stderr",
    ),
) -> None:
    """Embeddable AI x DB query engine."""
    ctx.obj = CliState(config, list(overrides or []), verbose)


# =============================================================================
# Shell
# =============================================================================


def _run_statement(db: Database, sql: str, tenant: Optional[str], display: DisplayConfig) -> None:
    rows = db.execute(sql, tenant=tenant)
    show_rowset(console, rows, display)


def _meta(db: Database, line: str) -> bool:
    """Handle a backslash command; False means quit."""
    command = line.split()[0]
    if command in ("\\q", "\\quit"):
        return False
    if command == "\\d":
        for table in db.catalog.tables():
            cols = ", ".join(f"{c.name} {c.type}" for c in table.columns)
            console.print(f"[cyan]{table.name}[/cyan]({cols}) [dim]key {table.primary_key}[/dim]")
    elif command == "\\m":
        for model in db.catalog.models():
            console.print(f"[cyan]{model.name}@{model.version}[/cyan] {model.kind} on {model.table}")
    else:
        console.print("[dim]\\d tables, \\m models, \\q quit[/dim]")
    return True


@app.command()
def shell(
    ctx: typer.Context,
    command: Optional[str] = typer.Option(
        None,
        "--command",
        "-c",
        help="Run these statements and exit",
    ),
    db_path: Optional[Path] = typer.Option(
        None,
        "--db",
        help="Database manifest YAML (built-in demo when omitted)",
    ),
    tenant: Optional[str] = typer.Option(
        None,
        "--tenant",
        "-t",
        help="Run statements as this tenant",
    ),
    max_rows: int = typer.Option(50, "--max-rows", help="Rows to print per result"),
) -> None:
    """Execute SQL against an in-memory database.

    [bold cyan]EXAMPLES[/bold cyan]:
      [dim]$[/dim] neurq shell -c "SELECT 1"
      [dim]$[/dim] neurq shell --db shop.yaml --tenant analyst
    """
    state = _state(ctx)
    display = DisplayConfig(max_rows=max_rows)
    try:
        db = _open_db(state, db_path)
    except (NeurqError, OSError) as e:
        _fail(e)
    try:
        if command is not None:
            try:
                for sql in split_statements(command):
                    _run_statement(db, sql, tenant, display)
            except NeurqError as e:
                _fail(e)
            return

        console.print("[dim]neurq shell - end statements with ';', \\q to quit[/dim]")
        buffer: list[str] = []
        while True:
            try:
                line = console.input("[bold]neurq> [/bold]" if not buffer else "   ... ")
            except EOFError:
                break
            if not buffer and line.strip().startswith("\\"):
                if not _meta(db, line.strip()):
                    break
                continue
            buffer.append(line)
            text = "\n".join(buffer)
            if not text.rstrip().endswith(";"):
                continue
            buffer = []
            for sql in split_statements(text):
                try:
                    _run_statement(db, sql, tenant, display)
                except NeurqError as e:
                    console.print(error_text(e))
    finally:
        db.close()


# =============================================================================
# Explain
# =============================================================================


@app.command()
def explain(
    ctx: typer.Context,
    sql: str = typer.Argument(..., help="Query to plan"),
    db_path: Optional[Path] = typer.Option(None, "--db", help="Database manifest YAML"),
    tenant: Optional[str] = typer.Option(None, "--tenant", "-t", help="Plan as this tenant"),
) -> None:
    """Print the rewritten logical plan with node fingerprints."""
    state = _state(ctx)
    try:
        db = _open_db(state, db_path)
        try:
            text = db.explain(sql, tenant=tenant)
        finally:
            db.close()
    except (NeurqError, OSError) as e:
        _fail(e)
    show_plan(console, text, "logical plan")


@app.command("explain-physical")
def explain_physical_cmd(
    ctx: typer.Context,
    sql: str = typer.Argument(..., help="Query to optimize"),
    objective: Optional[str] = typer.Option(
        None,
        "--objective",
        "-o",
        help="quality>=0.9 or latency<=100ms [default: from settings]",
    ),
    db_path: Optional[Path] = typer.Option(None, "--db", help="Database manifest YAML"),
    tenant: Optional[str] = typer.Option(None, "--tenant", "-t", help="Plan as this tenant"),
) -> None:
    """Print the chosen physical plan with latency and quality per operator.

    [bold cyan]EXAMPLES[/bold cyan]:
      [dim]$[/dim] neurq explain-physical "SELECT ..." --objective "quality>=0.9"
    """
    state = _state(ctx)
    try:
        db = _open_db(state, db_path)
        try:
            text = db.explain_physical(sql, objective, tenant=tenant)
        finally:
            db.close()
    except (NeurqError, OSError) as e:
        _fail(e)
    show_plan(console, text, "physical plan")


# =============================================================================
# Bulk load
# =============================================================================


@app.command("load-csv")
def load_csv_cmd(
    ctx: typer.Context,
    path: Path = typer.Argument(..., help="CSV file with a header row"),
    table: str = typer.Option(..., "--table", help="Target table"),
    db_path: Optional[Path] = typer.Option(None, "--db", help="Database manifest YAML"),
    command: Optional[str] = typer.Option(
        None,
        "--command",
        "-c",
        help="Statements to run after loading",
    ),
) -> None:
    """Append a CSV to a table, optionally querying the result."""
    state = _state(ctx)
    try:
        if not path.exists():
            raise ConfigError(f"CSV not found: {path}")
        db = _open_db(state, db_path)
        try:
            before = len(db.catalog.scan(table).rows)
            version = db.load_csv(table, path)
            after = len(db.catalog.scan(table).rows)
            console.print(f"[green]Loaded {after - before} rows into {table}[/green] [dim](version {version})[/dim]")
            for sql in split_statements(command or ""):
                show_rowset(console, db.execute(sql))
        finally:
            db.close()
    except (NeurqError, OSError) as e:
        _fail(e)


# =============================================================================
# Bench
# =============================================================================


def _seed_list(text: Optional[str]) -> list[int]:
    if not text:
        return []
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"seeds must be integers: {text!r}") from None


@app.command()
def bench(
    ctx: typer.Context,
    workload: str = typer.Option("R", "--workload", "-w", help="R (usage ratings) or T (multi-tenant embedding)"),
    engines: int = typer.Option(4, "--engines", "-e", help="Simulated inference engines"),
    mode: str = typer.Option(
        "full",
        "--mode",
        "-m",
        help="full, shared_model, per_task_model, sequential or export",
    ),
    policy: Optional[str] = typer.Option(None, "--policy", "-p", help="fixed or bucket [default: from settings]"),
    seeds: Optional[str] = typer.Option(None, "--seeds", help="Comma-separated seeds, one run each"),
    sweep_spec: Optional[str] = typer.Option(
        None,
        "--sweep",
        help="Sweep one parameter, e.g. engines=1,2,4,8,16",
    ),
    rows: Optional[int] = typer.Option(None, "--rows", help="R: usage rows; T: rows per tenant"),
    tenants: Optional[int] = typer.Option(None, "--tenants", help="T: number of tenants"),
    objective: Optional[str] = typer.Option(None, "--objective", "-o", help="Optimizer objective"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write <out>.json and <out>.csv"),
    output_format: str = typer.Option("table", "--format", "-f", help="stdout format: table, json or csv"),
) -> None:
    """Run a benchmark workload in virtual time and report metrics.

    [bold cyan]EXAMPLES[/bold cyan]:
      [dim]$[/dim] neurq bench --workload R --sweep engines=1,2,4,8,16 --out results/r
      [dim]$[/dim] neurq bench --workload T --mode per_task_model --policy bucket
    """
    state = _state(ctx)
    if output_format not in ("table", "json", "csv"):
        _fail(ConfigError(f"unknown format {output_format!r}; use table, json or csv"))
    base = BenchConfig(
        workload=workload.upper(),
        engines=engines,
        mode=mode,
        policy=policy,
        rows=rows,
        tenants=tenants,
        objective=objective,
    )
    try:
        seed_list = _seed_list(seeds)
        if seed_list:
            base.seed = seed_list[0]
        state.settings()
        if sweep_spec:
            key, values = parse_sweep(sweep_spec)
            report = sweep(base, key, values, seed_list, state.config_path, state.overrides)
        else:
            report = BenchReport()
            for seed in seed_list or [base.seed]:
                base.seed = seed
                report.runs.append(run_bench(BenchConfig(**vars(base)), state.config_path, state.overrides))
    except (NeurqError, ValueError) as e:
        _fail(e)

    if output_format == "json":
        console.out(report.to_json())
    elif output_format == "csv":
        console.out(report.to_csv(), end="")
    else:
        for run in report.runs:
            show_metrics(console, run.metrics, run.config.config_id)
    if out is not None:
        json_path, csv_path = report.write(out)
        console.print(f"[dim]Wrote {json_path} and {csv_path}[/dim]")


def cli() -> None:
    """Entry point for CLI."""
    app()


if __name__ == "__main__":
    cli()
