"""Per-node physical alternatives and their estimated own cost.

Every relational operator costs ``setup + per_row * input rows`` from
``db_costs``. AI nodes are costed with the same functions the executor
uses to simulate them (``neurq.runtime.costs``), so an estimate over an
exactly known batch equals its simulated duration.
"""

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Mapping, Optional, Sequence

from neurq.catalog import ModelRecord, TableStats
from neurq.errors import UnknownModel
from neurq.expr import conjuncts, equi_keys
from neurq.optimizer.physical import ANY_ENGINE, CACHE_READ, CostQuality, PhysicalOp
from neurq.optimizer.stats import Cardinality
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
from neurq.runtime import costs
from neurq.runtime.backends import ModelRuntime

if TYPE_CHECKING:
    from neurq.catalog import Catalog
    from neurq.config.types import DbCostConfig, NeurqConfig

RIDGE = "ridge_regressor"
GENERATIVE = "generative_mock"

_UNARY_IMPLS = {
    Select: "Filter",
    Project: "Project",
    Aggregate: "HashAggregate",
    Sort: "Sort",
    Limit: "Limit",
}


def relational_cost(db: "DbCostConfig", impl: str, inputs: Sequence[float]) -> float:
    """Own latency of a relational operator.

    ``inputs`` are the input cardinalities: the base table row count for
    scans, (left, right) for joins, the single child otherwise.
    """
    if impl == "FullScan":
        return db.scan.latency(inputs[0])
    if impl == "FilteredScan":
        return db.scan.latency(inputs[0]) + db.filter.per_row * inputs[0]
    if impl == "HashJoin":
        return db.hash_join.latency(inputs[0] + inputs[1])
    if impl == "MergeJoin":
        return db.merge_join.latency(inputs[0] + inputs[1])
    if impl == "NestedLoopJoin":
        return db.nested_loop.setup + db.nested_loop.per_row * inputs[0] * inputs[1]
    ops = {
        "Filter": db.filter,
        "Project": db.project,
        "HashAggregate": db.hash_aggregate,
        "Sort": db.sort,
        "Limit": db.limit,
        "Values": db.values,
    }
    return ops[impl].latency(inputs[0])


def is_equi_join(node: Join) -> bool:
    left, right = set(node.left.output), set(node.right.output)
    return node.kind == "INNER" and any(
        equi_keys(term, left, right) is not None for term in conjuncts(node.condition)
    )


@dataclass
class OptimizerContext:
    """Everything the cost model reads, frozen at admission.

    Attributes:
        config: Settings (db_costs, model profiles, batch policy, engines)
        stats: TableStats by table name at the plan's snapshot
        catalog: Model records for quality profiles (optional)
        runtime: Quality lookup; built from ``config`` when omitted
        residency: Engine id -> model keys (name, version) with resident weights
    """

    config: "NeurqConfig"
    stats: Mapping[str, TableStats]
    catalog: Optional["Catalog"] = None
    runtime: Optional[ModelRuntime] = None
    residency: Mapping[str, frozenset[tuple[str, int]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.runtime is None:
            self.runtime = ModelRuntime(self.config)
        self.cardinality = Cardinality(self.stats, self.config.db_costs.range_selectivity)

    @property
    def engines(self) -> list[str]:
        return self.config.executor.engine_ids()

    def record(self, node: AIInfer) -> Optional[ModelRecord]:
        if node.binding is None or self.catalog is None:
            return None
        try:
            return self.catalog.get_model(node.binding.name, node.binding.version)
        except UnknownModel:
            return None

    def resident_engines(self, model: tuple[str, int]) -> list[str]:
        return [e for e in self.engines if model in self.residency.get(e, frozenset())]


class CostModel:
    """Physical alternatives of one logical node, children not yet attached."""

    def __init__(self, ctx: OptimizerContext):
        self.ctx = ctx
        self.db = ctx.config.db_costs
        self.card = ctx.cardinality

    def alternatives(self, node: LogicalOp) -> list[PhysicalOp]:
        rows = self.card.rows(node)
        if isinstance(node, Scan):
            base = float(self.card.table_stats(node.table).row_count)
            impl = "FullScan" if node.predicate is None else "FilteredScan"
            return [PhysicalOp(impl, node, cost=relational_cost(self.db, impl, [base]), rows=rows)]
        if isinstance(node, Join):
            inputs = [self.card.rows(node.left), self.card.rows(node.right)]
            impls = ["NestedLoopJoin"]
            if is_equi_join(node):
                if min(inputs) <= self.db.hash_memory_rows:
                    impls.append("HashJoin")
                impls.append("MergeJoin")
            return [PhysicalOp(i, node, cost=relational_cost(self.db, i, inputs), rows=rows) for i in impls]
        if isinstance(node, AITrain):
            n = self.card.rows(node.child)
            profile = self.ctx.config.models.profile_for(RIDGE)
            return [PhysicalOp("Train", node, cost=costs.train_cost(profile, int(round(n))), rows=rows)]
        if isinstance(node, AIInfer):
            return self._infer(node, rows)
        if isinstance(node, Values):
            return [PhysicalOp("Values", node, cost=relational_cost(self.db, "Values", [len(node.rows)]), rows=rows)]
        impl = _UNARY_IMPLS[type(node)]
        cost = relational_cost(self.db, impl, [self.card.rows(node.children[0])])
        return [PhysicalOp(impl, node, cost=cost, rows=rows)]

    def item_length(self, node: AIInfer) -> int:
        """Estimated billed length of one item.

        Input tokens for encoders; the expected generated tokens for
        generative models.
        """
        if node.kind == RIDGE:
            return len(node.features)
        tokens = 0.0
        for key in node.features:
            origin = self.card.origin(node.child, key)
            if origin is not None:
                tokens += self.card.table_stats(origin[0]).avg_tokens.get(origin[1], 1.0)
            else:
                tokens += 1.0
        if node.kind == GENERATIVE:
            profile = self.ctx.config.models.profile_for(node.kind)
            return costs.output_tokens(profile, int(round(tokens)))
        return max(1, int(round(tokens)))

    def _infer(self, node: AIInfer, rows: float) -> list[PhysicalOp]:
        config = self.ctx.config
        profile = config.models.profile_for(node.kind)
        # every input row is inferred; key deduplication happens on the output
        lengths = [self.item_length(node)] * int(round(self.card.rows(node.child)))
        record = self.ctx.record(node)
        mask = node.binding.mask if node.binding else tuple(k.partition(".")[2] for k in node.features)
        hint = config.batch_policy.max_items

        variants = ["direct"] + (["staged"] if node.kind == RIDGE else [])
        placements = [(ANY_ENGINE, False)]
        if node.binding is not None:
            model = (node.binding.name, node.binding.version)
            placements += [(e, True) for e in self.ctx.resident_engines(model)]

        out = []
        for variant in variants:
            quality = self.ctx.runtime.quality_for(record, variant, mask)
            for engine, resident in placements:
                if variant == "direct":
                    cost = costs.infer_cost(profile, lengths, resident)
                else:
                    cost = (0.0 if resident else profile.load_cost) + costs.staged_cost(
                        profile, lengths,
                        config.models.relation_modeling, config.models.fusion,
                    )
                out.append(
                    PhysicalOp(
                        "AIInfer", node, variant=variant, engine=engine, batch_hint=hint,
                        cost=cost, quality=quality, rows=rows,
                    )
                )
        return out


def estimate(
    candidate: PhysicalOp,
    stats: Mapping[str, TableStats],
    config: "NeurqConfig",
    catalog: Optional["Catalog"] = None,
    residency: Optional[Mapping[str, frozenset[tuple[str, int]]]] = None,
) -> CostQuality:
    """Estimated CostQuality of a physical plan.

    Every node keeps its implementation, variant and placement and is
    re-costed from ``stats`` and the model profiles in ``config``. A
    placement on an engine that no longer holds the weights is costed
    cold. Cache reads keep the cost they were substituted with.
    """
    model = CostModel(OptimizerContext(config, stats, catalog, residency=residency or {}))
    return _reestimate(candidate, model).total


def _reestimate(op: PhysicalOp, model: CostModel) -> PhysicalOp:
    children = tuple(_reestimate(c, model) for c in op.children)
    if op.impl == CACHE_READ or op.cached_weights is not None:
        return op.with_children(children)
    same = [a for a in model.alternatives(op.logical) if a.impl == op.impl and a.variant == op.variant]
    if not same:
        return op.with_children(children)
    chosen = next((a for a in same if a.engine == op.engine), same[0])
    return replace(op, cost=chosen.cost, quality=chosen.quality, rows=chosen.rows).with_children(children)
