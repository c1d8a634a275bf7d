"""Name resolution, typing and access control.

``bind`` rewrites a parsed statement so that every column reference is
qualified with the alias of the relation it reads, ``*`` is expanded,
parameters are replaced by literals and every ``USING MODEL`` is pinned to
the latest registered version. When a tenant is given, references are
checked against its policy and model features it may not read are dropped
from the inference mask.
"""

from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import structlog

from neurq.catalog import Catalog, TableDef
from neurq.errors import (
    AccessDenied,
    AmbiguousColumn,
    BindError,
    EmptyMask,
    TypeMismatch,
    UnknownColumn,
)
from neurq.expr import columns_of, contains_aggregate, infer_type
from neurq.sql.ast import (
    Between,
    BinaryOp,
    ColumnRef,
    CreateModel,
    Cte,
    DropModel,
    Expr,
    FromClause,
    FromItem,
    FuncCall,
    JoinClause,
    Literal,
    ModelBinding,
    OrderItem,
    PredictBlock,
    PredictRef,
    PredictStatement,
    Select,
    SelectItem,
    Star,
    Statement,
    SubqueryRef,
    TableRef,
    UnaryOp,
)

logger = structlog.get_logger(__name__)

MODEL_OUTPUT_TYPES = {
    "ridge_regressor": "float64",
    "hash_embedder": "vector",
    "generative_mock": "text",
}


@dataclass
class _Relation:
    """One from-item visible in a scope."""

    alias: str
    columns: list[tuple[str, str]]  # (name, type)
    table: Optional[str] = None  # base table, when reading the catalog directly

    def has(self, name: str) -> bool:
        return any(c == name for c, _ in self.columns)


@dataclass
class _Scope:
    relations: list[_Relation] = field(default_factory=list)

    def types(self) -> dict[str, str]:
        return {f"{r.alias}.{c}": t for r in self.relations for c, t in r.columns}

    def relation(self, alias: str) -> Optional[_Relation]:
        for rel in self.relations:
            if rel.alias == alias:
                return rel
        return None


@dataclass(frozen=True)
class BoundStatement:
    """A statement whose references are all resolved.

    Attributes:
        statement: The rewritten AST (qualified refs, literals for params)
        output: (name, type) of each result column
        tables: Base tables read by the statement, by name
        tenant: Tenant the statement was bound for, if any
    """

    statement: Statement
    output: tuple[tuple[str, str], ...] = ()
    tables: dict[str, TableDef] = field(default_factory=dict, compare=False, hash=False)
    tenant: Optional[str] = None

    @property
    def variant(self) -> str:
        return self.statement.variant


def bind(
    stmt: Statement,
    catalog: Catalog,
    params: Optional[Mapping[str, Any]] = None,
    tenant: Optional[str] = None,
) -> BoundStatement:
    """Resolve a parsed statement against the catalog.

    Args:
        stmt: Parsed statement
        catalog: Catalog providing tables, models and policies
        params: Values for unqualified identifiers that name no column
        tenant: Enforce this tenant's policy when set

    Returns:
        BoundStatement

    Raises:
        UnknownTable, UnknownColumn, UnknownModel, TypeMismatch,
        AmbiguousColumn, AccessDenied, EmptyMask
    """
    binder = _Binder(catalog, dict(params or {}), tenant)
    if isinstance(stmt, (CreateModel, DropModel)):
        return BoundStatement(binder.bind_model_statement(stmt), (), {}, tenant)
    if isinstance(stmt, PredictStatement):
        env = binder.bind_ctes(stmt.ctes, {})
        block, columns = binder.bind_predict(stmt.block, env, "predict")
        bound_ctes = tuple(Cte(name, env[name][0]) for name in env)
        return BoundStatement(PredictStatement(block, bound_ctes), tuple(columns), binder.tables, tenant)
    select, columns = binder.bind_select(stmt, {})
    return BoundStatement(select, tuple(columns), binder.tables, tenant)


class _Binder:
    def __init__(self, catalog: Catalog, params: dict[str, Any], tenant: Optional[str]):
        self.catalog = catalog
        self.params = params
        self.tenant = tenant
        self.tables: dict[str, TableDef] = {}
        if tenant is not None:
            catalog.tenant(tenant)  # raises UnknownTenant early

    # -- access control --

    def _allowed(self, obj) -> bool:
        return self.tenant is None or self.catalog.check_access(self.tenant, obj)

    def _require(self, obj, label: str) -> None:
        if not self._allowed(obj):
            raise AccessDenied(self.tenant or "", label)

    # -- statements --

    def bind_model_statement(self, stmt: Statement) -> Statement:
        if isinstance(stmt, DropModel):
            self.catalog.get_model(stmt.name)
            return stmt
        assert isinstance(stmt, CreateModel)
        if stmt.kind not in MODEL_OUTPUT_TYPES:
            raise BindError(f"unknown model kind '{stmt.kind}'")
        table = self.catalog.table(stmt.table)
        self.tables[table.name] = table
        for col in stmt.features:
            kind = table.column_type(col)
            self._require((table.name, col), f"{table.name}.{col}")
            if stmt.kind != "ridge_regressor" and kind != "text":
                raise TypeMismatch(f"{stmt.kind} features must be text, '{col}' is {kind}")
        if stmt.kind == "ridge_regressor":
            if stmt.target is None:
                raise BindError("ridge_regressor needs a TARGET column")
            if table.column_type(stmt.target) not in ("int64", "float64", "bool"):
                raise TypeMismatch(f"target '{stmt.target}' must be numeric")
        if stmt.target is not None:
            table.column_type(stmt.target)
        return stmt

    def bind_ctes(self, ctes: tuple[Cte, ...], env: dict) -> dict:
        env = dict(env)
        for cte in ctes:
            env[cte.name] = self.bind_select(cte.query, env, with_ctes=False)
        return env

    def bind_select(self, select: Select, env: dict, with_ctes: bool = True):
        """Bind one SELECT; returns (bound Select, [(name, type)])."""
        if with_ctes and select.ctes:
            env = self.bind_ctes(select.ctes, env)
        scope = _Scope()
        from_ = self._bind_from(select.from_, env, scope) if select.from_ else None
        types = scope.types()

        where = None
        if select.where is not None:
            where = self._resolve(select.where, scope)
            self._check_bool(where, types, "WHERE")

        items: list[SelectItem] = []
        for item in select.items:
            if isinstance(item.expr, Star):
                items.extend(self._expand_star(item.expr, scope))
            else:
                items.append(SelectItem(self._resolve(item.expr, scope), item.alias))

        group_by = tuple(self._resolve(e, scope) for e in select.group_by)
        aliases = {item.alias: item.expr for item in items if item.alias}
        order_by = tuple(
            OrderItem(self._resolve(o.expr, scope, aliases), o.descending) for o in select.order_by
        )

        columns: list[tuple[str, str]] = []
        for pos, item in enumerate(items):
            kind = infer_type(item.expr, types)
            columns.append((output_name(item, pos), kind))
        for o in order_by:
            infer_type(o.expr, types)

        if group_by or any(contains_aggregate(i.expr) for i in items):
            self._check_grouping(items, group_by)

        bound_ctes = tuple(Cte(c.name, env[c.name][0]) for c in select.ctes) if with_ctes else ()
        bound = Select(
            tuple(SelectItem(i.expr, i.alias) for i in items),
            from_, where, group_by, order_by, select.limit, bound_ctes,
        )
        return bound, columns

    def _check_grouping(self, items: list[SelectItem], group_by: tuple[Expr, ...]) -> None:
        grouped = set()
        for expr in group_by:
            grouped |= columns_of(expr)
        for item in items:
            if contains_aggregate(item.expr) or item.expr in group_by:
                continue
            loose = columns_of(item.expr) - grouped
            if loose:
                raise BindError(f"column {sorted(loose)[0]} must appear in GROUP BY or an aggregate")

    def _check_bool(self, expr: Expr, types: dict[str, str], clause: str) -> None:
        if infer_type(expr, types) not in ("bool", "null"):
            raise TypeMismatch(f"{clause} condition must be boolean")

    def _expand_star(self, star: Star, scope: _Scope) -> list[SelectItem]:
        relations = scope.relations
        if star.table is not None:
            rel = scope.relation(star.table)
            if rel is None:
                raise UnknownColumn(f"{star.table}.*")
            relations = [rel]
        items = []
        for rel in relations:
            for name, _ in rel.columns:
                if rel.table is not None and not self._allowed((rel.table, name)):
                    continue
                items.append(SelectItem(ColumnRef(rel.alias, name)))
        return items

    # -- from clause --

    def _bind_from(self, clause: FromClause, env: dict, scope: _Scope) -> FromClause:
        first = self._bind_item(clause.first, env, scope)
        joins = []
        for join in clause.joins:
            item = self._bind_item(join.item, env, scope)
            condition = None
            if join.condition is not None:
                condition = self._resolve(join.condition, scope)
                self._check_bool(condition, scope.types(), "ON")
            joins.append(JoinClause(join.kind, item, condition))
        return FromClause(first, tuple(joins))

    def _bind_item(self, item: FromItem, env: dict, scope: _Scope) -> FromItem:
        if isinstance(item, TableRef):
            alias = item.alias or item.name
            if scope.relation(alias) is not None:
                raise BindError(f"duplicate relation alias '{alias}'")
            if item.name in env:
                _, columns = env[item.name]
                scope.relations.append(_Relation(alias, list(columns)))
                return TableRef(item.name, alias)
            table = self.catalog.table(item.name)
            self.tables[table.name] = table
            scope.relations.append(
                _Relation(alias, [(c.name, c.type) for c in table.columns], table.name)
            )
            return TableRef(item.name, alias, self.catalog.table_id(item.name))
        if isinstance(item, SubqueryRef):
            query, columns = self.bind_select(item.query, env)
            scope.relations.append(_Relation(item.alias, list(columns)))
            return SubqueryRef(query, item.alias)
        if isinstance(item, PredictRef):
            alias = item.scope_name
            block, columns = self.bind_predict(item.block, env, alias)
            scope.relations.append(_Relation(alias, list(columns)))
            return PredictRef(block, item.alias)
        raise BindError(f"unsupported from-item {type(item).__name__}")

    # -- predict --

    def bind_predict(self, block: PredictBlock, env: dict, alias: str):
        """Bind a PREDICT block; its output is (key, target) under ``alias``."""
        scope = _Scope()
        source = self._bind_from(block.source, env, scope)
        types = scope.types()
        key = self._resolve(block.key, scope)
        where = None
        if block.where is not None:
            where = self._resolve(block.where, scope)
            self._check_bool(where, types, "WHERE")

        if block.train_on is not None:
            target = self._resolve(block.target, scope)
            if types[target.key] not in ("int64", "float64", "bool"):
                raise TypeMismatch(f"TRAIN ON target {target.key} must be numeric")
            features = tuple(self._resolve(c, scope) for c in block.train_on)
            bound = PredictBlock(target, key, source, where, train_on=features, features=features)
            out_type = "float64"
        else:
            record = self.catalog.get_model(block.using_model)
            self._require(record.name, f"model {record.name}")
            mask = tuple(
                f for f in record.feature_columns
                if record.table is None or self._allowed((record.table, f))
            )
            if not mask:
                raise EmptyMask(f"tenant '{self.tenant}' may read none of the features of {record.name}")
            features = tuple(self._resolve(ColumnRef(None, f), scope) for f in mask)
            if record.kind != "ridge_regressor":
                for ref in features:
                    if types[ref.key] != "text":
                        raise TypeMismatch(f"{record.kind} input {ref.key} must be text")
            target = self._predict_target(block.target, scope)
            binding = ModelBinding(
                record.name, record.version, record.kind,
                tuple(record.feature_columns), mask, record.target_column,
            )
            if binding.sliced:
                logger.debug("model_sliced", model=record.name, tenant=self.tenant, mask=list(mask))
            bound = PredictBlock(
                target, key, source, where,
                using_model=record.name, binding=binding, features=features,
            )
            out_type = MODEL_OUTPUT_TYPES[record.kind]
        columns = [(key.name, types[key.key]), (bound.target.name, out_type)]
        if key.name == bound.target.name:
            raise BindError(f"PREDICT target and key are both named '{key.name}'")
        return bound, columns

    def _predict_target(self, target: ColumnRef, scope: _Scope) -> ColumnRef:
        """USING MODEL may name a fresh output column."""
        try:
            return self._resolve(target, scope)
        except UnknownColumn:
            alias = target.table or scope.relations[0].alias
            return ColumnRef(alias, target.name)

    # -- references --

    def _resolve(self, expr: Expr, scope: _Scope, aliases: Optional[dict[str, Expr]] = None) -> Expr:
        if isinstance(expr, ColumnRef):
            return self._resolve_ref(expr, scope, aliases)
        if isinstance(expr, BinaryOp):
            return BinaryOp(expr.op, self._resolve(expr.left, scope, aliases), self._resolve(expr.right, scope, aliases))
        if isinstance(expr, UnaryOp):
            return UnaryOp(expr.op, self._resolve(expr.operand, scope, aliases))
        if isinstance(expr, Between):
            return Between(
                self._resolve(expr.expr, scope, aliases),
                self._resolve(expr.low, scope, aliases),
                self._resolve(expr.high, scope, aliases),
                expr.negated,
            )
        if isinstance(expr, FuncCall):
            return FuncCall(expr.name, tuple(self._resolve(a, scope, aliases) for a in expr.args), expr.star)
        return expr

    def _resolve_ref(self, ref: ColumnRef, scope: _Scope, aliases: Optional[dict[str, Expr]]) -> Expr:
        if ref.table is not None:
            rel = scope.relation(ref.table)
            if rel is None or not rel.has(ref.name):
                raise UnknownColumn(ref.key)
            return self._checked(rel, ref.name)
        matches = [rel for rel in scope.relations if rel.has(ref.name)]
        if len(matches) > 1:
            raise AmbiguousColumn(ref.name)
        if matches:
            return self._checked(matches[0], ref.name)
        if aliases and ref.name in aliases:
            return aliases[ref.name]
        if ref.name in self.params:
            return Literal(self.params[ref.name])
        raise UnknownColumn(ref.name)

    def _checked(self, rel: _Relation, name: str) -> ColumnRef:
        if rel.table is not None:
            self._require((rel.table, name), f"{rel.table}.{name}")
        return ColumnRef(rel.alias, name)


def output_name(item: SelectItem, pos: int) -> str:
    if item.alias:
        return item.alias
    if isinstance(item.expr, ColumnRef):
        return item.expr.name
    return f"col{pos + 1}"

