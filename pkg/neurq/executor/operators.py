"""Relational operators over RowSets and the reference interpreter.

Join outputs are always in nested-loop order (left row order, then right
row order) whatever the algorithm, so every join implementation returns
identical RowSets. Each output row carries the max commit version of
the rows it was built from.
"""

from collections import defaultdict
from typing import Any, Optional, Sequence

from neurq.catalog import Catalog, RowSet
from neurq.config.types import DbCostConfig
from neurq.errors import ExecutionError
from neurq.expr import compile_expr, compile_predicate, conjoin, conjuncts, equi_keys, strip_qualifiers
from neurq.optimizer.cost import relational_cost
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
from neurq.runtime.backends import ModelRuntime
from neurq.sql.ast import FuncCall

# -- relational --


def scan(catalog: Catalog, node: Scan, snapshot: Optional[int]) -> RowSet:
    predicate = strip_qualifiers(node.predicate) if node.predicate is not None else None
    rows = catalog.scan(node.table, snapshot, node.projection, predicate)
    return RowSet(tuple(f"{node.alias}.{c}" for c in rows.columns), rows.rows, rows.versions)


def select(rows: RowSet, predicate) -> RowSet:
    keep = compile_predicate(predicate, rows.index())
    pairs = [(r, v) for r, v in zip(rows.rows, rows.versions) if keep(r)]
    return RowSet(rows.columns, [r for r, _ in pairs], [v for _, v in pairs])


def project(rows: RowSet, exprs) -> RowSet:
    index = rows.index()
    fns = [compile_expr(e, index) for e, _ in exprs]
    out = [tuple(fn(r) for fn in fns) for r in rows.rows]
    return RowSet(tuple(name for _, name in exprs), out, list(rows.versions))


def join(left: RowSet, right: RowSet, condition, impl: str = "NestedLoopJoin") -> RowSet:
    """Join two RowSets; ``impl`` picks the algorithm, not the result."""
    columns = left.columns + right.columns
    index = {name: i for i, name in enumerate(columns)}
    terms = conjuncts(condition)
    pair = residual = None
    for term in terms:
        pair = equi_keys(term, set(left.columns), set(right.columns))
        if pair is not None:
            residual = conjoin(t for t in terms if t is not term)
            break
    if pair is None or impl == "NestedLoopJoin":
        matches = _nested_loop(left, right, compile_predicate(condition, index))
    else:
        lpos, rpos = left.index()[pair[0]], right.index()[pair[1]]
        if impl == "MergeJoin":
            matches = _merge(left, right, lpos, rpos)
        else:
            matches = _hash(left, right, lpos, rpos)
        keep = compile_predicate(residual, index)
        matches = [(i, j) for i, j in matches if keep(left.rows[i] + right.rows[j])]
    rows = [left.rows[i] + right.rows[j] for i, j in matches]
    versions = [max(left.versions[i], right.versions[j]) for i, j in matches]
    return RowSet(columns, rows, versions)


def _nested_loop(left: RowSet, right: RowSet, keep) -> list[tuple[int, int]]:
    return [
        (i, j)
        for i, lrow in enumerate(left.rows)
        for j, rrow in enumerate(right.rows)
        if keep(lrow + rrow)
    ]


def _hash(left: RowSet, right: RowSet, lpos: int, rpos: int) -> list[tuple[int, int]]:
    table: dict[Any, list[int]] = defaultdict(list)
    for j, row in enumerate(right.rows):
        if row[rpos] is not None:
            table[row[rpos]].append(j)
    return [(i, j) for i, row in enumerate(left.rows) for j in table.get(row[lpos], ())]


def _merge(left: RowSet, right: RowSet, lpos: int, rpos: int) -> list[tuple[int, int]]:
    ls = sorted((i for i, r in enumerate(left.rows) if r[lpos] is not None), key=lambda i: left.rows[i][lpos])
    rs = sorted((j for j, r in enumerate(right.rows) if r[rpos] is not None), key=lambda j: right.rows[j][rpos])
    out = []
    a = b = 0
    while a < len(ls) and b < len(rs):
        lv, rv = left.rows[ls[a]][lpos], right.rows[rs[b]][rpos]
        if lv < rv:
            a += 1
        elif lv > rv:
            b += 1
        else:
            end_a = a
            while end_a < len(ls) and left.rows[ls[end_a]][lpos] == lv:
                end_a += 1
            end_b = b
            while end_b < len(rs) and right.rows[rs[end_b]][rpos] == rv:
                end_b += 1
            out.extend((i, j) for i in ls[a:end_a] for j in rs[b:end_b])
            a, b = end_a, end_b
    return sorted(out)


def aggregate(rows: RowSet, group_by, aggregates) -> RowSet:
    """Hash aggregation; groups come out in first-occurrence order."""
    index = rows.index()
    key_fns = [compile_expr(e, index) for e, _ in group_by]
    arg_fns = [
        None if call.star or not call.args else compile_expr(call.args[0], index)
        for call, _ in aggregates
    ]
    groups: dict[tuple, list[int]] = {}
    for pos, row in enumerate(rows.rows):
        groups.setdefault(tuple(fn(row) for fn in key_fns), []).append(pos)
    if not groups and not group_by:
        groups[()] = []
    out, versions = [], []
    for key, members in groups.items():
        folded = []
        for (call, _), fn in zip(aggregates, arg_fns):
            args = [fn(rows.rows[p]) for p in members] if fn is not None else None
            folded.append(_fold(call, args, len(members)))
        out.append(key + tuple(folded))
        versions.append(max((rows.versions[p] for p in members), default=0))
    columns = tuple(n for _, n in group_by) + tuple(n for _, n in aggregates)
    return RowSet(columns, out, versions)


def _fold(call: FuncCall, args: Optional[list], count: int) -> Any:
    if args is None:
        return count
    present = [a for a in args if a is not None]
    if call.name == "COUNT":
        return len(present)
    if not present:
        return None
    if call.name == "SUM":
        return sum(present)
    if call.name == "AVG":
        return sum(present) / len(present)
    if call.name == "MIN":
        return min(present)
    if call.name == "MAX":
        return max(present)
    raise ExecutionError(f"unknown aggregate {call.name}")


def sort(rows: RowSet, keys) -> RowSet:
    """Stable multi-key sort; NULLs compare greater than every value."""
    index = rows.index()
    order = list(range(len(rows)))
    for expr, desc in reversed(keys):
        fn = compile_expr(expr, index)
        keyed = [fn(r) for r in rows.rows]
        order.sort(key=lambda p: (keyed[p] is None, keyed[p] if keyed[p] is not None else 0), reverse=desc)
    return RowSet(rows.columns, [rows.rows[p] for p in order], [rows.versions[p] for p in order])


def limit(rows: RowSet, count: int) -> RowSet:
    return RowSet(rows.columns, rows.rows[:count], rows.versions[:count])


def values(node: Values) -> RowSet:
    return RowSet(node.columns, [tuple(r) for r in node.rows], [0] * len(node.rows))


def run_relational(catalog: Catalog, node: LogicalOp, inputs: Sequence[RowSet], snapshot, impl: str = "") -> RowSet:
    """Evaluate one relational operator over its child results."""
    if isinstance(node, Scan):
        return scan(catalog, node, snapshot)
    if isinstance(node, Select):
        return select(inputs[0], node.predicate)
    if isinstance(node, Project):
        return project(inputs[0], node.exprs)
    if isinstance(node, Join):
        return join(inputs[0], inputs[1], node.condition, impl or "NestedLoopJoin")
    if isinstance(node, Aggregate):
        return aggregate(inputs[0], node.group_by, node.aggregates)
    if isinstance(node, Sort):
        return sort(inputs[0], node.keys)
    if isinstance(node, Limit):
        return limit(inputs[0], node.count)
    if isinstance(node, Values):
        return values(node)
    raise ExecutionError(f"{node.label} is not a relational operator")


def simulated_cost(db: DbCostConfig, catalog: Catalog, impl: str, node: LogicalOp,
                   inputs: Sequence[RowSet], snapshot) -> float:
    """Own latency of a relational operator over actual row counts."""
    if isinstance(node, Scan):
        sizes = [catalog.statistics(node.table, snapshot).row_count]
    elif isinstance(node, Values):
        sizes = [len(node.rows)]
    else:
        sizes = [len(rows) for rows in inputs]
    return relational_cost(db, impl, sizes)


# -- AI helpers --


def infer_inputs(rows: RowSet, node: AIInfer) -> tuple[list[Any], list[tuple]]:
    """(keys, feature payloads) of every input row, in input order."""
    index = rows.index()
    kpos = index[node.key]
    fpos = [index[f] for f in node.features]
    return [r[kpos] for r in rows.rows], [tuple(r[p] for p in fpos) for r in rows.rows]


def infer_output(node: AIInfer, rows: RowSet, keys: Sequence[Any], predictions: Sequence[Any]) -> RowSet:
    """One (key, prediction) row per key; the first occurrence wins."""
    seen: dict[Any, int] = {}
    for pos, key in enumerate(keys):
        seen.setdefault(key, pos)
    out = [(key, predictions[pos]) for key, pos in seen.items()]
    return RowSet(node.output, out, [rows.versions[pos] for pos in seen.values()])


def train_inputs(rows: RowSet, node: AITrain) -> tuple[list[tuple], list[Any]]:
    index = rows.index()
    fpos = [index[f] for f in node.features]
    tpos = index[node.target]
    return [tuple(r[p] for p in fpos) for r in rows.rows], [r[tpos] for r in rows.rows]


def trained_model(node: AIInfer, models: dict[int, Any]) -> Any:
    """Weights produced by the AITrain under ``node``."""
    for below in node.child.walk():
        if isinstance(below, AITrain):
            return models[id(below)]
    raise ExecutionError("AIInfer without a model binding has no AITrain input")


class ReferenceInterpreter:
    """Single-threaded evaluation of a logical plan at one snapshot.

    AI nodes run in one call over all their rows with the direct variant.
    """

    def __init__(self, catalog: Catalog, runtime: ModelRuntime):
        self.catalog = catalog
        self.runtime = runtime

    def execute(self, plan: LogicalOp, snapshot: Optional[int] = None) -> RowSet:
        snapshot = self.catalog.version if snapshot is None else snapshot
        models: dict[int, Any] = {}
        return self._eval(plan, snapshot, models)

    def _eval(self, node: LogicalOp, snapshot: int, models: dict[int, Any]) -> RowSet:
        inputs = [self._eval(c, snapshot, models) for c in node.children]
        if isinstance(node, AITrain):
            features, target = train_inputs(inputs[0], node)
            models[id(node)] = self.runtime.train(node.features, features, target)
            return inputs[0]
        if isinstance(node, AIInfer):
            keys, payloads = infer_inputs(inputs[0], node)
            if node.binding is None:
                model = trained_model(node, models)
            else:
                record = self.catalog.get_model(node.binding.name, node.binding.version)
                model = self.runtime.slice_for_mask(record, node.binding.mask)
            predictions = self.runtime.backend(node.kind).predict(model, payloads) if payloads else []
            return infer_output(node, inputs[0], keys, predictions)
        return run_relational(self.catalog, node, inputs, snapshot)
