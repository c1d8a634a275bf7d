"""Text rendering of logical plans.

One operator per line, indented two spaces per depth, prefixed with the
first 8 hex characters of the operator's fingerprint (``????????`` before
pinning) and followed by its pinned versions.
"""

from neurq.planner.fingerprint import fingerprint_or_unpinned
from neurq.planner.logical import (
    Aggregate,
    AIInfer,
    AITrain,
    Join,
    Limit,
    LogicalOp,
    Project,
    Scan,
    Select,
    Sort,
    Values,
)
from neurq.sql.unparse import render_expr


def describe(node: LogicalOp) -> str:
    """One-line description of an operator without its children."""
    if isinstance(node, Scan):
        cols = ", ".join(node.projection) if node.projection is not None else "*"
        text = f"Scan {node.table} AS {node.alias} [{cols}]"
        if node.predicate is not None:
            text += f" WHERE {render_expr(node.predicate)}"
        return text
    if isinstance(node, Select):
        return f"Select {render_expr(node.predicate)}"
    if isinstance(node, Project):
        return "Project " + ", ".join(_named(e, n) for e, n in node.exprs)
    if isinstance(node, Join):
        on = f" ON {render_expr(node.condition)}" if node.condition is not None else ""
        return f"Join {node.kind}{on}"
    if isinstance(node, Aggregate):
        groups = ", ".join(n for _, n in node.group_by) or "()"
        aggs = ", ".join(_named(c, n) for c, n in node.aggregates)
        return f"Aggregate BY {groups} [{aggs}]"
    if isinstance(node, Sort):
        keys = ", ".join(render_expr(e) + (" DESC" if d else "") for e, d in node.keys)
        return f"Sort {keys}"
    if isinstance(node, Limit):
        return f"Limit {node.count}"
    if isinstance(node, Values):
        return f"Values {len(node.rows)} row(s)"
    if isinstance(node, AITrain):
        return (
            f"AITrain {node.kind} TARGET {node.target} ON ({', '.join(node.features)}) "
            f"KEY {node.key}"
        )
    if isinstance(node, AIInfer):
        model = f"model={node.binding.name}" if node.binding else "model=trained"
        return (
            f"AIInfer {node.kind} {model} ({', '.join(node.features)}) "
            f"KEY {node.key} -> {node.output_key}, {node.output_target}"
        )
    return node.label


def versions(node: LogicalOp) -> str:
    """Pinned snapshot and model version annotations."""
    parts = []
    snapshot = getattr(node, "snapshot", None)
    if isinstance(node, (Scan, AITrain, AIInfer)):
        parts.append(f"snapshot={snapshot if snapshot is not None else '-'}")
    if isinstance(node, AIInfer) and node.binding is not None:
        parts.append(f"version={node.binding.version}")
        if node.binding.sliced:
            parts.append(f"mask={','.join(node.binding.mask)}")
    return f" ({' '.join(parts)})" if parts else ""


def explain(plan: LogicalOp) -> str:
    lines: list[str] = []

    def visit(node: LogicalOp, depth: int) -> None:
        fp = fingerprint_or_unpinned(node)[:8]
        lines.append(f"{'  ' * depth}{fp} {describe(node)}{versions(node)}")
        for child in node.children:
            visit(child, depth + 1)

    visit(plan, 0)
    return "\n".join(lines)


def _named(expr, name: str) -> str:
    text = render_expr(expr)
    return text if text == name else f"{text} AS {name}"
