"""Semantics-preserving logical rewrites.

Rules run in a fixed order (pushdowns, AIInfer pull-up, constant folding),
each to its own fixpoint, and the sequence repeats until a whole pass
changes nothing or the pass cap is reached. A rule returns the very same
plan object when it does not fire, which is how fixpoints are detected.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import structlog

from neurq.expr import columns_of, conjoin, conjuncts, fold_constants, substitute
from neurq.planner.logical import (
    AIInfer,
    AITrain,
    Join,
    Limit,
    LogicalOp,
    Project,
    Scan,
    Select,
    Sort,
    column,
    required_columns,
)
from neurq.sql.ast import Literal

logger = structlog.get_logger(__name__)


def transform_up(plan: LogicalOp, fn: Callable[[LogicalOp], LogicalOp]) -> LogicalOp:
    """Apply ``fn`` bottom-up, rebuilding only the nodes whose children changed."""
    children = plan.children
    new_children = tuple(transform_up(c, fn) for c in children)
    if any(a is not b for a, b in zip(children, new_children)):
        plan = plan.with_children(new_children)
    return fn(plan)


class RewriteRule(ABC):
    """One rewrite; ``apply`` returns the input object when nothing fires."""

    name: str = "rule"

    @abstractmethod
    def apply(self, plan: LogicalOp) -> LogicalOp:
        pass


class PredicatePushdown(RewriteRule):
    """Move selections towards the scans.

    Adjacent selections merge; conjuncts over one join side move below the
    join; selections pass through projections (by substitution) and sorts
    and finally fold into the scan predicate. Nothing passes a Limit, an
    Aggregate or an AI node.
    """

    name = "predicate_pushdown"

    def apply(self, plan: LogicalOp) -> LogicalOp:
        return transform_up(plan, self._push)

    def _push(self, node: LogicalOp) -> LogicalOp:
        if not isinstance(node, Select):
            return node
        child = node.child
        if isinstance(child, Select):
            return Select(child.child, conjoin([child.predicate, node.predicate]))
        if isinstance(child, Scan):
            return replace(child, predicate=conjoin(conjuncts(child.predicate) + [node.predicate]))
        if isinstance(child, Project):
            mapping = {name: expr for expr, name in child.exprs}
            pushed = substitute(node.predicate, mapping)
            return Project(self._push(Select(child.child, pushed)), child.exprs)
        if isinstance(child, Sort):
            return Sort(self._push(Select(child.child, node.predicate)), child.keys)
        if isinstance(child, Join):
            return self._split_join(node, child)
        return node

    def _split_join(self, node: Select, join: Join) -> LogicalOp:
        left_cols, right_cols = set(join.left.output), set(join.right.output)
        left, right, rest = [], [], []
        for term in conjuncts(node.predicate):
            cols = columns_of(term)
            if cols and cols <= left_cols:
                left.append(term)
            elif cols and cols <= right_cols:
                right.append(term)
            else:
                rest.append(term)
        if not left and not right:
            return node
        new_left = self._push(Select(join.left, conjoin(left))) if left else join.left
        new_right = self._push(Select(join.right, conjoin(right))) if right else join.right
        out: LogicalOp = Join(new_left, new_right, join.condition, join.kind)
        if rest:
            out = Select(out, conjoin(rest))
        return out


class ProjectionPushdown(RewriteRule):
    """Prune columns no ancestor reads.

    Scans narrow their projection, projections drop unused outputs and AI
    nodes get a Project child carrying exactly the columns they consume.
    """

    name = "projection_pushdown"

    def apply(self, plan: LogicalOp) -> LogicalOp:
        return self._prune(plan, set(plan.output))

    def _prune(self, node: LogicalOp, required: set[str]) -> LogicalOp:
        if isinstance(node, Scan):
            names = tuple(c for c, _ in node.columns if f"{node.alias}.{c}" in required)
            current = node.projection if node.projection is not None else tuple(c for c, _ in node.columns)
            return node if names == current else replace(node, projection=names)
        if isinstance(node, Project):
            exprs = tuple((e, n) for e, n in node.exprs if n in required)
            pruned = node if exprs == node.exprs else Project(node.child, exprs)
            return self._rebuild(pruned, [required_columns(pruned)])
        if isinstance(node, Join):
            need = required | columns_of(node.condition)
            return self._rebuild(
                node,
                [need & set(node.left.output), need & set(node.right.output)],
            )
        if isinstance(node, (AITrain, AIInfer)):
            inputs = tuple(dict.fromkeys(_ai_inputs(node)))
            child = node.child
            if not isinstance(child, (Project, AITrain)) and set(child.output) != set(inputs):
                node = node.with_children((Project(child, tuple((column(k), k) for k in inputs)),))
            own = set(inputs) | (required if isinstance(node, AITrain) else set())
            return self._rebuild(node, [own])
        if isinstance(node, Limit):
            return self._rebuild(node, [required])
        return self._rebuild(node, [required | required_columns(node)])

    def _rebuild(self, node: LogicalOp, needs: Sequence[set[str]]) -> LogicalOp:
        children = node.children
        new = tuple(self._prune(c, n) for c, n in zip(children, needs))
        if all(a is b for a, b in zip(children, new)):
            return node
        return node.with_children(new)


def _ai_inputs(node: LogicalOp) -> tuple[str, ...]:
    if isinstance(node, AITrain):
        return (node.key,) + node.features + (node.target,)
    return node.inputs


class AIInferPullUp(RewriteRule):
    """Evaluate selective key predicates before inference.

    ``σ(key)(AIInfer(c))`` becomes ``AIInfer(σ(c))`` so the AI operator only
    sees the rows that survive. Inference is key-preserving, which makes the
    swap exact; trained inference is left alone because filtering its input
    would change the training set.
    """

    name = "ai_infer_pullup"

    def apply(self, plan: LogicalOp) -> LogicalOp:
        return transform_up(plan, self._pull)

    def _pull(self, node: LogicalOp) -> LogicalOp:
        if not (isinstance(node, Select) and isinstance(node.child, AIInfer)):
            return node
        infer = node.child
        if isinstance(infer.child, AITrain):
            return node
        key_terms, rest = [], []
        for term in conjuncts(node.predicate):
            cols = columns_of(term)
            (key_terms if cols and cols <= {infer.output_key} else rest).append(term)
        if not key_terms:
            return node
        pushed = substitute(conjoin(key_terms), {infer.output_key: column(infer.key)})
        out: LogicalOp = infer.with_children((Select(infer.child, pushed),))
        return Select(out, conjoin(rest)) if rest else out


class ConstantFolding(RewriteRule):
    """Fold literal subexpressions and drop always-true selections."""

    name = "constant_folding"

    def apply(self, plan: LogicalOp) -> LogicalOp:
        return transform_up(plan, self._fold)

    def _fold(self, node: LogicalOp) -> LogicalOp:
        if isinstance(node, Select):
            predicate = fold_constants(node.predicate)
            if isinstance(predicate, Literal) and predicate.value is True:
                return node.child
            return node if predicate == node.predicate else Select(node.child, predicate)
        if isinstance(node, Scan) and node.predicate is not None:
            predicate = fold_constants(node.predicate)
            if isinstance(predicate, Literal) and predicate.value is True:
                return replace(node, predicate=None)
            return node if predicate == node.predicate else replace(node, predicate=predicate)
        if isinstance(node, Join) and node.condition is not None:
            condition = fold_constants(node.condition)
            return node if condition == node.condition else replace(node, condition=condition)
        if isinstance(node, Project):
            exprs = tuple((fold_constants(e), n) for e, n in node.exprs)
            return node if exprs == node.exprs else Project(node.child, exprs)
        return node


DEFAULT_RULES: tuple[RewriteRule, ...] = (
    PredicatePushdown(),
    ProjectionPushdown(),
    AIInferPullUp(),
    ConstantFolding(),
)


@dataclass
class RewriteResult:
    plan: LogicalOp
    trace: list[str] = field(default_factory=list)  # names of rules that fired, in order

    @property
    def changed(self) -> bool:
        return bool(self.trace)


def apply_rewrites(
    plan: LogicalOp,
    rules: Optional[Sequence[RewriteRule]] = None,
    max_passes: int = 10,
) -> RewriteResult:
    """Run ``rules`` in order, each to fixpoint, repeating whole passes.

    Args:
        plan: Logical plan
        rules: Ordered rules (default: pushdowns, pull-up, folding)
        max_passes: Cap on whole passes and on iterations of one rule

    Returns:
        RewriteResult with the final plan and the trace of fired rules
    """
    rules = DEFAULT_RULES if rules is None else tuple(rules)
    trace: list[str] = []
    for _ in range(max_passes):
        before = plan
        for rule in rules:
            for _ in range(max_passes):
                rewritten = rule.apply(plan)
                if rewritten is plan:
                    break
                trace.append(rule.name)
                plan = rewritten
        if plan is before:
            break
    if trace:
        logger.debug("plan_rewritten", rules=trace)
    return RewriteResult(plan, trace)
