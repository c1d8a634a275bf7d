"""Plan fingerprints and snapshot pinning.

A fingerprint is a 128-bit blake2b digest of a canonical rendering of the
subplan: join children are sorted, predicates use ``expr.canonical`` (sorted
conjuncts) and every Scan and AI node contributes its snapshot pin and model
version. Equal fingerprints therefore mean the same rows at the same versions.
"""

import hashlib
from dataclasses import replace
from typing import NewType

from neurq.errors import UnpinnedPlan
from neurq.expr import canonical
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
from neurq.planner.rewrites import transform_up

PlanFingerprint = NewType("PlanFingerprint", str)

UNPINNED = "????????"


def pin(plan: LogicalOp, snapshot: int) -> LogicalOp:
    """Stamp ``snapshot`` on every Scan and AI node."""

    def stamp(node: LogicalOp) -> LogicalOp:
        if isinstance(node, (Scan, AITrain, AIInfer)) and node.snapshot != snapshot:
            return replace(node, snapshot=snapshot)
        return node

    return transform_up(plan, stamp)


def fingerprint(node: LogicalOp, strict: bool = True) -> PlanFingerprint:
    """Content hash of the subplan rooted at ``node``.

    With ``strict=False`` missing pins hash as ``@None`` instead of raising.

    Raises:
        UnpinnedPlan: if a Scan or AI node has no snapshot
    """
    digest = hashlib.blake2b(canonical_plan(node, strict).encode(), digest_size=16)
    return PlanFingerprint(digest.hexdigest())


def fingerprint_or_unpinned(node: LogicalOp) -> str:
    try:
        return fingerprint(node)
    except UnpinnedPlan:
        return UNPINNED


def canonical_plan(node: LogicalOp, strict: bool = True) -> str:
    if isinstance(node, Scan):
        _pinned(node, strict)
        projection = ",".join(node.projection) if node.projection is not None else "*"
        return (
            f"Scan({node.table}#{node.table_id} as {node.alias} @{node.snapshot} "
            f"[{projection}] {canonical(node.predicate)})"
        )
    if isinstance(node, Join):
        sides = sorted((canonical_plan(node.left, strict), canonical_plan(node.right, strict)))
        return f"Join[{node.kind} {canonical(node.condition)}]({sides[0]},{sides[1]})"
    if isinstance(node, Select):
        return f"Select[{canonical(node.predicate)}]({canonical_plan(node.child, strict)})"
    if isinstance(node, Project):
        exprs = ",".join(f"{canonical(e)}->{n}" for e, n in node.exprs)
        return f"Project[{exprs}]({canonical_plan(node.child, strict)})"
    if isinstance(node, Aggregate):
        groups = ",".join(f"{canonical(e)}->{n}" for e, n in node.group_by)
        aggs = ",".join(f"{canonical(c)}->{n}" for c, n in node.aggregates)
        return f"Aggregate[{groups};{aggs}]({canonical_plan(node.child, strict)})"
    if isinstance(node, Sort):
        keys = ",".join(f"{canonical(e)}{' DESC' if d else ''}" for e, d in node.keys)
        return f"Sort[{keys}]({canonical_plan(node.child, strict)})"
    if isinstance(node, Limit):
        return f"Limit[{node.count}]({canonical_plan(node.child, strict)})"
    if isinstance(node, Values):
        return f"Values[{','.join(node.columns)}]{node.rows!r}"
    if isinstance(node, AITrain):
        _pinned(node, strict)
        return (
            f"AITrain[{node.kind} @{node.snapshot} x={','.join(node.features)} "
            f"y={node.target} key={node.key}]({canonical_plan(node.child, strict)})"
        )
    if isinstance(node, AIInfer):
        _pinned(node, strict)
        model = f"{node.binding.name}@{node.binding.version}" if node.binding else "trained"
        return (
            f"AIInfer[{node.kind} {model} @{node.snapshot} x={','.join(node.features)} "
            f"key={node.key} out={node.output_key},{node.output_target}]"
            f"({canonical_plan(node.child, strict)})"
        )
    raise TypeError(f"unknown logical operator {type(node).__name__}")


def _pinned(node: LogicalOp, strict: bool) -> None:
    if strict and node.snapshot is None:
        raise UnpinnedPlan(node.label)
