"""AST of the neurq SQL dialect.

All nodes are frozen dataclasses over tuples, so statements compare
structurally and can be hashed into plan fingerprints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: Union[int, float, str, bool, None]


@dataclass(frozen=True)
class ColumnRef:
    table: Optional[str]
    name: str

    @property
    def key(self) -> str:
        """Column key used in plan schemas: ``alias.name`` or ``name``."""
        return f"{self.table}.{self.name}" if self.table else self.name


@dataclass(frozen=True)
class BinaryOp:
    op: str  # + - * / % = <> < <= > >= AND OR
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class UnaryOp:
    op: str  # - NOT
    operand: "Expr"


@dataclass(frozen=True)
class Between:
    expr: "Expr"
    low: "Expr"
    high: "Expr"
    negated: bool = False


@dataclass(frozen=True)
class FuncCall:
    name: str  # upper-cased
    args: tuple["Expr", ...] = ()
    star: bool = False  # COUNT(*)


@dataclass(frozen=True)
class Star:
    table: Optional[str] = None


Expr = Union[Literal, ColumnRef, BinaryOp, UnaryOp, Between, FuncCall, Star]

AGGREGATES = frozenset({"COUNT", "SUM", "AVG", "MIN", "MAX"})


# -- statements --------------------------------------------------------------


@dataclass(frozen=True)
class SelectItem:
    expr: Expr
    alias: Optional[str] = None


@dataclass(frozen=True)
class OrderItem:
    expr: Expr
    descending: bool = False


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: Optional[str] = None
    table_id: Optional[int] = field(default=None, compare=False)  # set by the binder

    @property
    def scope_name(self) -> str:
        return self.alias or self.name


@dataclass(frozen=True)
class SubqueryRef:
    query: "Select"
    alias: str

    @property
    def scope_name(self) -> str:
        return self.alias


@dataclass(frozen=True)
class PredictRef:
    block: "PredictBlock"
    alias: Optional[str] = None

    @property
    def scope_name(self) -> str:
        return self.alias or "predict"


FromItem = Union[TableRef, SubqueryRef, PredictRef]


@dataclass(frozen=True)
class JoinClause:
    kind: str  # INNER | CROSS
    item: FromItem
    condition: Optional[Expr] = None


@dataclass(frozen=True)
class FromClause:
    first: FromItem
    joins: tuple[JoinClause, ...] = ()

    def items(self) -> list[FromItem]:
        return [self.first] + [j.item for j in self.joins]


@dataclass(frozen=True)
class ModelBinding:
    """A registered model resolved at bind time.

    ``mask`` is the subset of ``features`` the caller may read; it equals
    ``features`` unless access control sliced the model.
    """

    name: str
    version: int
    kind: str
    features: tuple[str, ...]
    mask: tuple[str, ...]
    target: Optional[str] = None

    @property
    def sliced(self) -> bool:
        return self.mask != self.features


@dataclass(frozen=True)
class PredictBlock:
    target: ColumnRef
    key: ColumnRef
    source: FromClause
    where: Optional[Expr] = None
    train_on: Optional[tuple[ColumnRef, ...]] = None
    using_model: Optional[str] = None
    # set by the binder: the model for USING MODEL and the resolved input columns
    binding: Optional[ModelBinding] = field(default=None, compare=False)
    features: Optional[tuple[ColumnRef, ...]] = field(default=None, compare=False)


@dataclass(frozen=True)
class Cte:
    name: str
    query: "Select"


@dataclass(frozen=True)
class Select:
    items: tuple[SelectItem, ...]
    from_: Optional[FromClause] = None
    where: Optional[Expr] = None
    group_by: tuple[Expr, ...] = ()
    order_by: tuple[OrderItem, ...] = ()
    limit: Optional[int] = None
    ctes: tuple[Cte, ...] = ()

    @property
    def variant(self) -> str:
        return "PredictSelect" if _has_predict(self) else "Select"


@dataclass(frozen=True)
class PredictStatement:
    """A bare top-level PREDICT block; behaves as ``SELECT * FROM (PREDICT ...)``."""

    block: PredictBlock
    ctes: tuple[Cte, ...] = ()

    @property
    def variant(self) -> str:
        return "PredictSelect"


@dataclass(frozen=True)
class CreateModel:
    name: str
    kind: str
    table: str
    features: tuple[str, ...]
    target: Optional[str] = None

    @property
    def variant(self) -> str:
        return "CreateModel"


@dataclass(frozen=True)
class DropModel:
    name: str

    @property
    def variant(self) -> str:
        return "DropModel"


Statement = Union[Select, PredictStatement, CreateModel, DropModel]


def _has_predict(select: Select) -> bool:
    for cte in select.ctes:
        if _has_predict(cte.query):
            return True
    if select.from_ is None:
        return False
    for item in select.from_.items():
        if isinstance(item, PredictRef):
            return True
        if isinstance(item, SubqueryRef) and _has_predict(item.query):
            return True
    return False
