"""Bounded-objective search over physical alternatives.

Bottom-up dynamic programming: each logical node combines its own
alternatives with every combination of its children's frontiers, then
drops strictly dominated candidates. Exact (latency, quality) ties all
survive pruning so the final tie-break sees them.
"""

import itertools
from typing import Optional

import structlog

from neurq.cache import CacheIndex
from neurq.errors import Infeasible, OptimizerError
from neurq.optimizer.cost import CostModel, OptimizerContext
from neurq.optimizer.physical import CostQuality, Objective, PhysicalOp
from neurq.optimizer.substitute import cache_aware_substitute
from neurq.planner.logical import LogicalOp

logger = structlog.get_logger(__name__)


def _order(candidate: PhysicalOp) -> tuple:
    t = candidate.total
    return (t.latency, -t.quality, candidate.node_count, candidate.physical_fingerprint)


def pareto(candidates: list[PhysicalOp], cap: Optional[int] = None) -> list[PhysicalOp]:
    """Drop strictly dominated candidates, then cap the frontier.

    The cap keeps one candidate per distinct (latency, quality) point,
    lowest latency first, and fills remaining slots with exact ties.
    """
    kept: list[PhysicalOp] = []
    best_q = float("-inf")
    last: Optional[CostQuality] = None
    for candidate in sorted(candidates, key=_order):
        point = candidate.total
        if point == last:
            kept.append(candidate)
        elif point.quality > best_q:
            kept.append(candidate)
            best_q = point.quality
            last = point
    if cap is None or len(kept) <= cap:
        return kept
    heads, ties = [], []
    seen: set[CostQuality] = set()
    for candidate in kept:
        (ties if candidate.total in seen else heads).append(candidate)
        seen.add(candidate.total)
    chosen = heads[:cap]
    chosen += ties[: cap - len(chosen)]
    return sorted(chosen, key=_order)


def enumerate_physical(
    plan: LogicalOp,
    ctx: OptimizerContext,
    prune: bool = True,
    cap: Optional[int] = None,
) -> list[PhysicalOp]:
    """Candidate physical plans for ``plan``.

    Args:
        plan: Logical plan
        ctx: Statistics, profiles and engine residency
        prune: Keep only the Pareto frontier per node (False enumerates exhaustively)
        cap: Frontier size per node (default from settings; ignored without pruning)

    Raises:
        MissingStats: if a scanned table has no statistics
        MissingProfile: if an AI node's model kind has no cost profile
    """
    model = CostModel(ctx)
    cap = ctx.config.optimizer.frontier_cap if cap is None else cap

    def visit(node: LogicalOp) -> list[PhysicalOp]:
        frontiers = [visit(child) for child in node.children]
        out = [
            own.with_children(tuple(combo))
            for own in model.alternatives(node)
            for combo in itertools.product(*frontiers)
        ]
        return pareto(out, cap) if prune else out

    candidates = visit(plan)
    logger.debug("physical_enumerated", candidates=len(candidates), pruned=prune)
    return candidates


def choose(candidates: list[PhysicalOp], objective: Objective) -> PhysicalOp:
    """Best candidate under ``objective``.

    Ties break on fewer physical nodes, then the physical fingerprint.

    Raises:
        OptimizerError: if ``candidates`` is empty
        Infeasible: if no candidate satisfies the bound
    """
    if not candidates:
        raise OptimizerError("no physical candidates")
    if objective.mode == "min_latency":
        key = _order
        fallback = min(candidates, key=lambda c: (-c.total.quality, c.total.latency))
    else:
        key = lambda c: (-c.total.quality, c.total.latency, c.node_count, c.physical_fingerprint)  # noqa: E731
        fallback = min(candidates, key=lambda c: (c.total.latency, -c.total.quality))
    feasible = [c for c in candidates if objective.feasible(c.total)]
    if not feasible:
        raise Infeasible(fallback.total, objective)
    return min(feasible, key=key)


def optimize(
    plan: LogicalOp,
    ctx: OptimizerContext,
    objective: Objective,
    cache_index: Optional[CacheIndex] = None,
    read_cost: Optional[dict] = None,
) -> PhysicalOp:
    """Enumerate, choose and substitute cached subplans.

    ``read_cost`` maps each cache Tier to its read cost (ms per MB); it is
    required when ``cache_index`` is given.
    """
    chosen = choose(enumerate_physical(plan, ctx), objective)
    if cache_index:
        chosen = cache_aware_substitute(chosen, cache_index, read_cost or {})
    logger.debug("plan_chosen", objective=str(objective), total=str(chosen.total), nodes=chosen.node_count)
    return chosen
