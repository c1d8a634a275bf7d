"""Logical operators over the DB and AI operator sets.

Plans are immutable trees of frozen dataclasses. Every operator exposes
``children`` and ``output`` (column keys, ``alias.name``). Rewrites build
new nodes with ``dataclasses.replace`` and ``with_children``.
"""

from dataclasses import dataclass, replace
from typing import Optional

from neurq.expr import columns_of
from neurq.sql.ast import ColumnRef, Expr, FuncCall, ModelBinding


class LogicalOp:
    """Base of all logical operators."""

    @property
    def children(self) -> tuple["LogicalOp", ...]:
        return ()

    def with_children(self, children: tuple["LogicalOp", ...]) -> "LogicalOp":
        return self

    @property
    def output(self) -> tuple[str, ...]:
        raise NotImplementedError

    @property
    def label(self) -> str:
        return type(self).__name__

    def walk(self):
        """Pre-order traversal."""
        yield self
        for child in self.children:
            yield from child.walk()


class _Unary(LogicalOp):
    child: LogicalOp

    @property
    def children(self) -> tuple[LogicalOp, ...]:
        return (self.child,)

    def with_children(self, children):
        return replace(self, child=children[0])

    @property
    def output(self) -> tuple[str, ...]:
        return self.child.output


@dataclass(frozen=True)
class Scan(LogicalOp):
    table: str
    alias: str
    table_id: int
    columns: tuple[tuple[str, str], ...]  # (name, type) of the whole table
    predicate: Optional[Expr] = None  # over alias-qualified keys
    projection: Optional[tuple[str, ...]] = None  # bare column names
    snapshot: Optional[int] = None

    @property
    def output(self) -> tuple[str, ...]:
        names = self.projection if self.projection is not None else tuple(c for c, _ in self.columns)
        return tuple(f"{self.alias}.{c}" for c in names)

    @property
    def types(self) -> dict[str, str]:
        return {f"{self.alias}.{c}": t for c, t in self.columns}


@dataclass(frozen=True)
class Select(_Unary):
    child: LogicalOp
    predicate: Expr


@dataclass(frozen=True)
class Project(_Unary):
    child: LogicalOp
    exprs: tuple[tuple[Expr, str], ...]  # (expression, output key)

    @property
    def output(self) -> tuple[str, ...]:
        return tuple(name for _, name in self.exprs)

    @property
    def is_rename(self) -> bool:
        return all(isinstance(e, ColumnRef) for e, _ in self.exprs)


@dataclass(frozen=True)
class Join(LogicalOp):
    left: LogicalOp
    right: LogicalOp
    condition: Optional[Expr] = None
    kind: str = "INNER"  # INNER | CROSS

    @property
    def children(self) -> tuple[LogicalOp, ...]:
        return (self.left, self.right)

    def with_children(self, children):
        return replace(self, left=children[0], right=children[1])

    @property
    def output(self) -> tuple[str, ...]:
        return self.left.output + self.right.output


@dataclass(frozen=True)
class Aggregate(_Unary):
    child: LogicalOp
    group_by: tuple[tuple[Expr, str], ...]
    aggregates: tuple[tuple[FuncCall, str], ...]

    @property
    def output(self) -> tuple[str, ...]:
        return tuple(n for _, n in self.group_by) + tuple(n for _, n in self.aggregates)


@dataclass(frozen=True)
class Sort(_Unary):
    child: LogicalOp
    keys: tuple[tuple[Expr, bool], ...]  # (expression, descending)


@dataclass(frozen=True)
class Limit(_Unary):
    child: LogicalOp
    count: int


@dataclass(frozen=True)
class Values(LogicalOp):
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    @property
    def output(self) -> tuple[str, ...]:
        return self.columns


@dataclass(frozen=True)
class AITrain(_Unary):
    """Train a ridge model on the child rows; passes the rows through.

    The trained weights travel with the relation to the AIInfer above.
    """

    child: LogicalOp
    kind: str
    features: tuple[str, ...]  # column keys
    target: str
    key: str
    snapshot: Optional[int] = None


@dataclass(frozen=True)
class AIInfer(_Unary):
    """Key-preserving inference: one (key, prediction) row per key value.

    ``binding`` is the registered model for USING MODEL; for TRAIN ON the
    child is the AITrain that produces the weights.
    """

    child: LogicalOp
    kind: str
    features: tuple[str, ...]  # column keys, aligned with the model mask
    key: str
    output_key: str
    output_target: str
    binding: Optional[ModelBinding] = None
    snapshot: Optional[int] = None

    @property
    def output(self) -> tuple[str, ...]:
        return (self.output_key, self.output_target)

    @property
    def trained(self) -> bool:
        return self.binding is None

    @property
    def inputs(self) -> tuple[str, ...]:
        """Columns the node reads from its child."""
        return tuple(dict.fromkeys((self.key,) + self.features))


def column(key: str) -> ColumnRef:
    """ColumnRef for a plan column key."""
    alias, dot, name = key.partition(".")
    return ColumnRef(alias, name) if dot else ColumnRef(None, key)


def required_columns(node: LogicalOp) -> set[str]:
    """Child-output keys an operator reads itself (not counting its parent's needs)."""
    if isinstance(node, Select):
        return columns_of(node.predicate)
    if isinstance(node, Project):
        out: set[str] = set()
        for expr, _ in node.exprs:
            out |= columns_of(expr)
        return out
    if isinstance(node, Join):
        return columns_of(node.condition)
    if isinstance(node, Aggregate):
        out = set()
        for expr, _ in node.group_by:
            out |= columns_of(expr)
        for call, _ in node.aggregates:
            out |= columns_of(call)
        return out
    if isinstance(node, Sort):
        out = set()
        for expr, _ in node.keys:
            out |= columns_of(expr)
        return out
    if isinstance(node, AITrain):
        return set(node.features) | {node.target, node.key}
    if isinstance(node, AIInfer):
        return set(node.inputs)
    return set()


def plan_snapshot(plan: LogicalOp) -> Optional[int]:
    """The snapshot pin of a plan (all pins are equal after ``pin``)."""
    for node in plan.walk():
        if isinstance(node, Scan) and node.snapshot is not None:
            return node.snapshot
    return None


def count_nodes(plan: LogicalOp) -> int:
    return sum(1 for _ in plan.walk())
