"""Cache-aware substitution of physical subplans.

Join results, bound-model inference results and trained weights are the
cacheable artifacts. Their keys combine the pinned logical fingerprint,
the snapshot and the model version, so only an entry produced at the
plan's own versions can match.
"""

from dataclasses import replace
from typing import TYPE_CHECKING, Mapping, Optional

import structlog

from neurq.cache import CacheIndex, CacheKey, CacheKind, Tier
from neurq.errors import UnpinnedPlan
from neurq.optimizer.physical import CACHE_READ, PhysicalOp
from neurq.planner.fingerprint import fingerprint
from neurq.planner.logical import AIInfer, AITrain, Join, plan_snapshot

if TYPE_CHECKING:
    from neurq.config.types import NeurqConfig

logger = structlog.get_logger(__name__)


def entry_key(op: PhysicalOp) -> Optional[CacheKey]:
    """Cache key of the artifact ``op`` produces, or None if it is not cacheable."""
    node = op.logical
    if not isinstance(node, (Join, AIInfer, AITrain)):
        return None
    if isinstance(node, AIInfer) and node.binding is None:
        return None
    try:
        fp = fingerprint(node)
    except UnpinnedPlan:
        return None
    if isinstance(node, Join):
        return CacheKey(CacheKind.RELATIONAL, fp, plan_snapshot(node))
    if isinstance(node, AITrain):
        return CacheKey(CacheKind.OPTIMIZER_STATE, fp, node.snapshot)
    variant = fp if op.variant == "direct" else f"{fp}:{op.variant}"
    return CacheKey(CacheKind.EMBEDDING, variant, node.snapshot, (node.binding.name, node.binding.version))


def relational_size(rows: int, width: int, config: "NeurqConfig") -> float:
    """Simulated MB of a materialized relation."""
    return max(rows, 1) * max(width, 1) * config.db_costs.row_width_bytes / 2**20


def cache_aware_substitute(
    plan: PhysicalOp,
    index: CacheIndex,
    read_cost: Mapping[Tier, float],
) -> PhysicalOp:
    """Replace every maximal cached subplan by a CacheRead leaf.

    A replacement happens only when reading the entry is no slower than
    the subtree it stands for, so the estimated total never increases.
    Trained weights found in the cache turn Train into a weight read; its
    input rows are still computed.

    Args:
        plan: Chosen physical plan
        index: Consistent copy of the cache contents
        read_cost: Read cost per tier, ms per MB
    """
    if not index:
        return plan
    hits = 0

    def visit(op: PhysicalOp) -> PhysicalOp:
        nonlocal hits
        key = entry_key(op)
        entry = index.get(key) if key is not None else None
        if entry is not None:
            latency = read_cost[entry.tier] * entry.size
            if isinstance(op.logical, AITrain):
                if latency <= op.cost:
                    hits += 1
                    op = replace(op, cost=latency, cached_weights=key)
            elif latency <= op.total.latency:
                hits += 1
                return PhysicalOp(
                    CACHE_READ, op.logical, engine=op.engine, variant=op.variant,
                    cost=latency, quality=op.total.quality, rows=op.rows,
                    cache_key=key, replaced=op,
                ).retotal()
        children = tuple(visit(c) for c in op.children)
        if all(a is b for a, b in zip(children, op.children)) and op.cached_weights is None:
            return op
        return op.with_children(children)

    out = visit(plan)
    if hits:
        logger.debug("plan_substituted", hits=hits, before=str(plan.total), after=str(out.total))
    return out
