"""Lowering of bound statements to logical plans.

Every SELECT ends in a Project naming its columns ``qualifier.name``; CTE
and subquery references are inlined by lowering their bodies under the
reference's alias. A PREDICT block becomes ``AITrain -> AIInfer`` (TRAIN
ON) or ``Project -> AIInfer`` (USING MODEL) above its relational input.
"""

from typing import Optional

from neurq.catalog import TableDef
from neurq.errors import PlanError
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
    column,
)
from neurq.sql.ast import (
    AGGREGATES,
    Between,
    BinaryOp,
    ColumnRef,
    CreateModel,
    DropModel,
    Expr,
    FromClause,
    FromItem,
    FuncCall,
    PredictBlock,
    PredictRef,
    PredictStatement,
    Select as SelectStmt,
    SubqueryRef,
    TableRef,
    UnaryOp,
)
from neurq.sql.binder import BoundStatement, output_name

RIDGE = "ridge_regressor"


def lower(bound: BoundStatement) -> LogicalOp:
    """Lower a bound SELECT or PREDICT statement to a logical plan.

    Raises:
        PlanError: for model statements, which have no plan
    """
    stmt = bound.statement
    if isinstance(stmt, (CreateModel, DropModel)):
        raise PlanError(f"{stmt.variant} statements are executed directly, not planned")
    lowering = _Lowering(bound.tables)
    if isinstance(stmt, PredictStatement):
        env = {cte.name: cte.query for cte in stmt.ctes}
        block = lowering.predict(stmt.block, "predict", env)
        return Project(block, tuple((column(k), k.split(".", 1)[1]) for k in block.output))
    return lowering.select(stmt, None, {})


class _Lowering:
    def __init__(self, tables: dict[str, TableDef]):
        self.tables = tables

    def select(self, select: SelectStmt, qualifier: Optional[str], env: dict) -> LogicalOp:
        env = {**env, **{cte.name: cte.query for cte in select.ctes}}
        plan: LogicalOp = (
            self.from_clause(select.from_, env) if select.from_ is not None else Values((), ((),))
        )
        if select.where is not None:
            plan = Select(plan, select.where)

        items = [item.expr for item in select.items]
        order = [(o.expr, o.descending) for o in select.order_by]
        if select.group_by or any(_has_aggregate(e) for e in items):
            plan, mapping = self.aggregate(plan, select.group_by, items + [e for e, _ in order])
            items = [_replace(e, mapping) for e in items]
            order = [(_replace(e, mapping), d) for e, d in order]
        if order:
            plan = Sort(plan, tuple(order))
        if select.limit is not None:
            plan = Limit(plan, select.limit)

        prefix = f"{qualifier}." if qualifier else ""
        exprs = tuple(
            (expr, prefix + output_name(item, pos))
            for pos, (expr, item) in enumerate(zip(items, select.items))
        )
        return Project(plan, exprs)

    def aggregate(self, plan: LogicalOp, group_by, exprs: list[Expr]):
        mapping: dict[Expr, Expr] = {}
        groups = []
        for pos, expr in enumerate(group_by):
            key = expr.key if isinstance(expr, ColumnRef) else f"__group{pos}"
            groups.append((expr, key))
            if not isinstance(expr, ColumnRef):
                mapping[expr] = ColumnRef(None, key)
        calls: list[tuple[FuncCall, str]] = []
        for expr in exprs:
            for call in _aggregate_calls(expr):
                if call not in mapping:
                    key = f"__agg{len(calls)}"
                    calls.append((call, key))
                    mapping[call] = ColumnRef(None, key)
        return Aggregate(plan, tuple(groups), tuple(calls)), mapping

    def from_clause(self, clause: FromClause, env: dict) -> LogicalOp:
        plan = self.from_item(clause.first, env)
        for join in clause.joins:
            plan = Join(plan, self.from_item(join.item, env), join.condition, join.kind)
        return plan

    def from_item(self, item: FromItem, env: dict) -> LogicalOp:
        if isinstance(item, TableRef):
            alias = item.scope_name
            if item.table_id is None:
                if item.name not in env:
                    raise PlanError(f"unbound relation '{item.name}'")
                return self.select(env[item.name], alias, env)
            table = self.tables[item.name]
            return Scan(
                item.name, alias, item.table_id,
                tuple((c.name, c.type) for c in table.columns),
            )
        if isinstance(item, SubqueryRef):
            return self.select(item.query, item.alias, env)
        if isinstance(item, PredictRef):
            return self.predict(item.block, item.scope_name, env)
        raise PlanError(f"cannot lower {type(item).__name__}")

    def predict(self, block: PredictBlock, alias: str, env: dict) -> AIInfer:
        plan = self.from_clause(block.source, env)
        if block.where is not None:
            plan = Select(plan, block.where)
        features = tuple(ref.key for ref in block.features or block.train_on or ())
        key = block.key.key
        out_key = f"{alias}.{block.key.name}"
        out_target = f"{alias}.{block.target.name}"
        if block.binding is None:
            train = AITrain(plan, RIDGE, features, block.target.key, key)
            return AIInfer(train, RIDGE, features, key, out_key, out_target)
        inputs = tuple(dict.fromkeys((key,) + features))
        plan = Project(plan, tuple((column(k), k) for k in inputs))
        return AIInfer(plan, block.binding.kind, features, key, out_key, out_target, block.binding)


def _has_aggregate(expr: Expr) -> bool:
    return bool(_aggregate_calls(expr))


def _aggregate_calls(expr: Expr) -> list[FuncCall]:
    if isinstance(expr, FuncCall):
        if expr.name in AGGREGATES:
            return [expr]
        return [c for a in expr.args for c in _aggregate_calls(a)]
    if isinstance(expr, BinaryOp):
        return _aggregate_calls(expr.left) + _aggregate_calls(expr.right)
    if isinstance(expr, UnaryOp):
        return _aggregate_calls(expr.operand)
    if isinstance(expr, Between):
        return [c for e in (expr.expr, expr.low, expr.high) for c in _aggregate_calls(e)]
    return []


def _replace(expr: Expr, mapping: dict[Expr, Expr]) -> Expr:
    """Replace whole subexpressions (aggregate calls, group expressions)."""
    if expr in mapping:
        return mapping[expr]
    if isinstance(expr, BinaryOp):
        return BinaryOp(expr.op, _replace(expr.left, mapping), _replace(expr.right, mapping))
    if isinstance(expr, UnaryOp):
        return UnaryOp(expr.op, _replace(expr.operand, mapping))
    if isinstance(expr, Between):
        return Between(
            _replace(expr.expr, mapping), _replace(expr.low, mapping),
            _replace(expr.high, mapping), expr.negated,
        )
    if isinstance(expr, FuncCall):
        return FuncCall(expr.name, tuple(_replace(a, mapping) for a in expr.args), expr.star)
    return expr
