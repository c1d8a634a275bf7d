"""Rich rendering for query results, plans and run metrics."""

from dataclasses import dataclass
from typing import Any

from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from neurq.catalog import RowSet
from neurq.executor.metrics import Metrics


@dataclass
class DisplayConfig:
    """Configuration for output display."""

    max_rows: int = 50
    show_versions: bool = False


def _cell(value: Any) -> str:
    if value is None:
        return "[dim]NULL[/dim]"
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, tuple) and len(value) > 6:
        head = ", ".join(f"{v:.3g}" if isinstance(v, float) else str(v) for v in value[:4])
        return f"({head}, ... {len(value)} values)"
    return escape(str(value))


def rowset_table(rows: RowSet, config: DisplayConfig | None = None) -> Table:
    """Build a rich table for a RowSet, truncated to ``max_rows``."""
    config = config or DisplayConfig()
    table = Table(show_header=True, header_style="bold cyan")
    for name in rows.columns:
        table.add_column(name)
    if config.show_versions:
        table.add_column("version", style="dim")
    for i, row in enumerate(rows.rows[: config.max_rows]):
        cells = [_cell(v) for v in row]
        if config.show_versions:
            cells.append(str(rows.versions[i]))
        table.add_row(*cells)
    return table


def show_rowset(console: Console, rows: RowSet, config: DisplayConfig | None = None) -> None:
    config = config or DisplayConfig()
    console.print(rowset_table(rows, config))
    shown = min(len(rows), config.max_rows)
    suffix = "" if shown == len(rows) else f" (showing {shown})"
    console.print(f"[dim]{len(rows)} row{'s' if len(rows) != 1 else ''}{suffix}[/dim]")


def show_plan(console: Console, text: str, title: str) -> None:
    console.print(Panel(text, title=title, border_style="blue", expand=False))


def metrics_table(metrics: Metrics, title: str = "Run metrics") -> Table:
    """Run-wide metrics as a two-column table, then one row per tenant."""
    table = Table(title=title, show_header=True, header_style="bold cyan")
    table.add_column("metric")
    table.add_column("value", justify="right")
    table.add_row("makespan_ms", f"{metrics.makespan_ms:.3f}")
    table.add_row("queries", f"{metrics.completed}/{metrics.queries}")
    table.add_row("throughput_qpm", f"{metrics.throughput_qpm:.3f}")
    for p, v in metrics.latency_ms.items():
        table.add_row(f"latency_{p}_ms", f"{v:.3f}")
    table.add_row("batches", str(metrics.batches))
    table.add_row("padding_fraction", f"{metrics.padding_fraction:.3f}")
    table.add_row("cse_hits", str(metrics.cse_hits))
    table.add_row("peak_memory_mb", f"{metrics.peak_memory_mb:.1f}")
    table.add_row("total_peak_memory_mb", f"{metrics.total_peak_memory_mb:.1f}")
    if metrics.migrations or metrics.faults:
        table.add_row("migrations", str(metrics.migrations))
        table.add_row("faults", str(metrics.faults))
    return table


def tenant_table(metrics: Metrics) -> Table:
    table = Table(title="Per tenant", show_header=True, header_style="bold cyan")
    table.add_column("tenant")
    table.add_column("throughput_qpm", justify="right")
    table.add_column("p50_ms", justify="right")
    table.add_column("p99_ms", justify="right")
    for tenant, qpm in metrics.tenant_throughput_qpm.items():
        lat = metrics.tenant_latency_ms.get(tenant, {})
        table.add_row(tenant, f"{qpm:.3f}", f"{lat.get('p50', 0.0):.3f}", f"{lat.get('p99', 0.0):.3f}")
    return table


def show_metrics(console: Console, metrics: Metrics, title: str = "Run metrics") -> None:
    console.print(metrics_table(metrics, title))
    if len(metrics.tenant_throughput_qpm) > 1:
        console.print(tenant_table(metrics))


def error_text(exc: BaseException) -> str:
    """``Error:`` line for the console; SQL errors already carry line:col."""
    return f"[red]Error:[/red] {escape(str(exc))}"
