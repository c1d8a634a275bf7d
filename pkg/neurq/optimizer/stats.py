"""Cardinality estimation.

Independence assumption throughout: equality selects 1/distinct, ranges
select a configured constant, equi-joins produce |L|*|R|/max(distinct).
Column statistics are found by tracing a column key back through renaming
projections to the Scan that produces it.
"""

from typing import Mapping, Optional

from neurq.catalog import TableStats
from neurq.errors import MissingStats
from neurq.expr import columns_of, conjuncts, equi_keys
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
from neurq.sql.ast import Between, BinaryOp, ColumnRef, Expr, Literal, UnaryOp

_RANGE_OPS = ("<", "<=", ">", ">=")


class Cardinality:
    """Row-count and distinct-count estimates over one plan.

    Args:
        stats: TableStats by table name
        range_selectivity: Selectivity of a range predicate
    """

    def __init__(self, stats: Mapping[str, TableStats], range_selectivity: float = 1 / 3):
        self.stats = stats
        self.range_selectivity = range_selectivity
        self._rows: dict[int, float] = {}

    def table_stats(self, table: str) -> TableStats:
        try:
            return self.stats[table]
        except KeyError:
            raise MissingStats(table) from None

    def origin(self, node: LogicalOp, key: str) -> Optional[tuple[str, str]]:
        """(table, column) a key of ``node``'s output is read from, if traceable."""
        if isinstance(node, Scan):
            alias, _, name = key.partition(".")
            return (node.table, name) if alias == node.alias else None
        if isinstance(node, Project):
            for expr, name in node.exprs:
                if name == key:
                    return self.origin(node.child, expr.key) if isinstance(expr, ColumnRef) else None
            return None
        if isinstance(node, Join):
            side = node.left if key in node.left.output else node.right
            return self.origin(side, key)
        if isinstance(node, AIInfer):
            return self.origin(node.child, node.key) if key == node.output_key else None
        if isinstance(node, Aggregate):
            for expr, name in node.group_by:
                if name == key and isinstance(expr, ColumnRef):
                    return self.origin(node.child, expr.key)
            return None
        if isinstance(node, (Select, Sort, Limit, AITrain)):
            return self.origin(node.child, key)
        return None

    def distinct(self, node: LogicalOp, key: str) -> float:
        rows = self.rows(node)
        origin = self.origin(node, key)
        if origin is None:
            return max(1.0, rows)
        return max(1.0, min(float(self.table_stats(origin[0]).distinct_count(origin[1])), rows))

    def selectivity(self, predicate: Optional[Expr], node: LogicalOp) -> float:
        """Fraction of ``node``'s rows satisfying ``predicate``."""
        if predicate is None:
            return 1.0
        if isinstance(predicate, Literal):
            return 1.0 if predicate.value is True else 0.0
        if isinstance(predicate, BinaryOp) and predicate.op == "AND":
            return self.selectivity(predicate.left, node) * self.selectivity(predicate.right, node)
        if isinstance(predicate, BinaryOp) and predicate.op == "OR":
            a, b = self.selectivity(predicate.left, node), self.selectivity(predicate.right, node)
            return a + b - a * b
        if isinstance(predicate, UnaryOp) and predicate.op == "NOT":
            return 1.0 - self.selectivity(predicate.operand, node)
        if isinstance(predicate, BinaryOp) and predicate.op in ("=", "<>"):
            cols = sorted(columns_of(predicate))
            if not cols:
                return self.range_selectivity
            eq = 1.0 / max(self._base_distinct(node, c) for c in cols)
            return eq if predicate.op == "=" else 1.0 - eq
        if isinstance(predicate, Between) or (isinstance(predicate, BinaryOp) and predicate.op in _RANGE_OPS):
            sel = self.range_selectivity
            return 1.0 - sel if isinstance(predicate, Between) and predicate.negated else sel
        return self.range_selectivity

    def _base_distinct(self, node: LogicalOp, key: str) -> float:
        origin = self.origin(node, key)
        if origin is None:
            return max(1.0, self.rows(node))
        return float(self.table_stats(origin[0]).distinct_count(origin[1]))

    def rows(self, node: LogicalOp) -> float:
        cached = self._rows.get(id(node))
        if cached is None:
            cached = self._estimate(node)
            self._rows[id(node)] = cached
        return cached

    def _estimate(self, node: LogicalOp) -> float:
        if isinstance(node, Scan):
            base = float(self.table_stats(node.table).row_count)
            return base * self.selectivity(node.predicate, node)
        if isinstance(node, Values):
            return float(len(node.rows))
        if isinstance(node, Select):
            return self.rows(node.child) * self.selectivity(node.predicate, node.child)
        if isinstance(node, Join):
            left, right = self.rows(node.left), self.rows(node.right)
            out = left * right
            equi_done = False
            left_cols, right_cols = set(node.left.output), set(node.right.output)
            for term in conjuncts(node.condition):
                pair = equi_keys(term, left_cols, right_cols)
                if pair is not None and not equi_done:
                    out /= max(self.distinct(node.left, pair[0]), self.distinct(node.right, pair[1]))
                    equi_done = True
                elif pair is None:
                    out *= self.selectivity(term, node)
            return out
        if isinstance(node, Aggregate):
            child = self.rows(node.child)
            if not node.group_by:
                return 1.0
            groups = 1.0
            for expr, _ in node.group_by:
                key = expr.key if isinstance(expr, ColumnRef) else None
                groups *= self.distinct(node.child, key) if key else max(1.0, child)
            return min(groups, max(1.0, child))
        if isinstance(node, Limit):
            return min(float(node.count), self.rows(node.child))
        if isinstance(node, AIInfer):
            child = node.child
            return min(self.rows(child), self.distinct(child, node.key))
        if isinstance(node, (Project, Sort, AITrain)):
            return self.rows(node.child)
        raise TypeError(f"unknown logical operator {type(node).__name__}")
