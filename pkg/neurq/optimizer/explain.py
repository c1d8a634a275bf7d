"""Text rendering of physical plans.

Same tree layout as the logical explain, one physical operator per line
with its own cost and subtree (latency, quality), and a closing total.
"""

from neurq.optimizer.physical import ANY_ENGINE, CACHE_READ, PhysicalOp
from neurq.planner.explain import describe


def _annotations(op: PhysicalOp) -> str:
    parts = []
    if op.impl == "AIInfer":
        parts.append(op.variant)
        parts.append(f"engine={op.engine}")
        parts.append(f"batch={op.batch_hint}")
    elif op.engine != ANY_ENGINE:
        parts.append(f"engine={op.engine}")
    if op.cached_weights is not None:
        parts.append("weights=cached")
    if op.impl == CACHE_READ and op.cache_key is not None:
        parts.append(f"{op.cache_key.kind.value}:{op.cache_key.fingerprint[:8]}")
    return f" [{' '.join(parts)}]" if parts else ""


def explain_physical(plan: PhysicalOp) -> str:
    lines: list[str] = []

    def visit(op: PhysicalOp, depth: int) -> None:
        lines.append(
            f"{'  ' * depth}{op.impl}{_annotations(op)} {describe(op.logical)}"
            f"  rows={op.rows:.0f} cost={op.cost:.3f}ms total={op.total}"
        )
        for child in op.children:
            visit(child, depth + 1)

    visit(plan, 0)
    lines.append(f"total: latency={plan.total.latency:.3f}ms quality={plan.total.quality:.3f}")
    return "\n".join(lines)
