"""Versioned in-memory storage, model catalog and tenant policies.

One global SnapshotVersion counter per Catalog. Every committed append
bumps it and tags its rows, so a scan at snapshot ``v`` sees exactly the
rows tagged ``<= v``. Rows are append-only; per-table version tags are
therefore sorted and visibility is a bisect.
"""

import csv
import threading
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, NewType, Optional, Sequence, Union

import structlog

from neurq.errors import (
    DuplicateTable,
    FutureSnapshot,
    SchemaMismatch,
    UnknownColumn,
    UnknownModel,
    UnknownTable,
    UnknownTenant,
)
from neurq.expr import compile_predicate
from neurq.runtime.costs import CostProfile
from neurq.sql.ast import Expr

logger = structlog.get_logger(__name__)

TableId = NewType("TableId", int)
SnapshotVersion = NewType("SnapshotVersion", int)

COLUMN_TYPES = ("int64", "float64", "text", "bool")


@dataclass(frozen=True)
class Column:
    name: str
    type: str


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[Column, ...]
    primary_key: str

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate column names in table '{self.name}'")
        if self.primary_key not in names:
            raise SchemaMismatch(f"primary key '{self.primary_key}' is not a column of '{self.name}'")
        for col in self.columns:
            if col.type not in COLUMN_TYPES:
                raise SchemaMismatch(f"column '{col.name}' has unknown type '{col.type}'")

    @classmethod
    def from_dict(cls, name: str, data: dict) -> "TableDef":
        """Create from a manifest entry (``columns`` list + ``primary_key``)."""
        columns = tuple(Column(c["name"], c["type"]) for c in data.get("columns", []))
        return cls(name, columns, data["primary_key"])

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column_type(self, name: str) -> str:
        for col in self.columns:
            if col.name == name:
                return col.type
        raise UnknownColumn(name, self.name)

    def position(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise UnknownColumn(name, self.name) from None


@dataclass(frozen=True)
class ModelRecord:
    """Immutable catalog entry of one model version.

    ``weights`` is an opaque payload interpreted by neurq.runtime.
    ``quality_profile`` maps ``"<variant>|<sorted,mask>"`` to a quality in [0, 1].
    """

    name: str
    kind: str
    feature_columns: tuple[str, ...]
    target_column: Optional[str] = None
    table: Optional[str] = None
    weights: bytes = b""
    cost_profile: CostProfile = field(default_factory=CostProfile)
    quality_profile: dict[str, float] = field(default_factory=dict, compare=False, hash=False)
    version: int = 0

    def __post_init__(self) -> None:
        if self.kind == "ridge_regressor" and not self.feature_columns:
            raise SchemaMismatch("ridge_regressor needs at least one feature column")

    @property
    def key(self) -> tuple[str, int]:
        return (self.name, self.version)


def quality_key(variant: str, mask: Iterable[str]) -> str:
    return f"{variant}|{','.join(sorted(mask))}"


@dataclass(frozen=True)
class TenantPolicy:
    tenant: str
    allowed_columns: frozenset[tuple[str, str]] = frozenset()
    allowed_models: frozenset[str] = frozenset()

    @classmethod
    def from_dict(cls, tenant: str, data: dict) -> "TenantPolicy":
        columns = frozenset(
            (table, col)
            for table, cols in (data.get("columns") or {}).items()
            for col in cols
        )
        return cls(tenant, columns, frozenset(data.get("models") or ()))

    def allows(self, obj: Union[str, tuple[str, str]]) -> bool:
        if isinstance(obj, tuple):
            return obj in self.allowed_columns
        return obj in self.allowed_models


@dataclass
class RowSet:
    """Rows with column keys and a commit-version tag per row."""

    columns: tuple[str, ...]
    rows: list[tuple]
    versions: list[int]

    def __len__(self) -> int:
        return len(self.rows)

    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.columns)}

    def column(self, name: str) -> list[Any]:
        pos = self.index()[name]
        return [row[pos] for row in self.rows]

    def reorder(self, columns: Sequence[str]) -> "RowSet":
        """Same rows with columns rearranged (or subset) by name."""
        if tuple(columns) == self.columns:
            return self
        idx = self.index()
        try:
            positions = [idx[c] for c in columns]
        except KeyError as exc:
            raise UnknownColumn(str(exc.args[0])) from None
        return RowSet(tuple(columns), [tuple(r[p] for p in positions) for r in self.rows], list(self.versions))

    def multiset(self) -> list[tuple]:
        """Rows sorted by repr; order-insensitive comparison helper."""
        return sorted(self.rows, key=repr)

    @property
    def max_version(self) -> int:
        return max(self.versions, default=0)


@dataclass(frozen=True)
class TableStats:
    row_count: int
    distinct: dict[str, int] = field(hash=False)
    avg_tokens: dict[str, float] = field(default_factory=dict, hash=False)

    def distinct_count(self, column: str) -> int:
        return max(1, self.distinct.get(column, self.row_count))


@dataclass
class _Table:
    id: TableId
    definition: TableDef
    created_at: int
    rows: list[tuple] = field(default_factory=list)
    versions: list[int] = field(default_factory=list)


Listener = Callable[[str, dict], None]
_PY_TYPES = {"int64": (int,), "float64": (int, float), "text": (str,), "bool": (bool,)}


class Catalog:
    """Tables, models and tenant policies of one database instance.

    Writers serialize through a single commit lock; readers never take it.
    """

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._version = 0
        self._tables: dict[str, _Table] = {}
        self._by_id: dict[int, _Table] = {}
        self._models: dict[str, list[ModelRecord]] = {}
        self._model_versions: dict[str, int] = {}
        self._tenants: dict[str, TenantPolicy] = {}
        self._listeners: list[Listener] = []
        self._stats_cache: dict[tuple[int, int], TableStats] = {}

    @property
    def version(self) -> SnapshotVersion:
        return SnapshotVersion(self._version)

    def subscribe(self, listener: Listener) -> None:
        """Register ``listener(event, info)`` for appended, model_registered, model_dropped."""
        self._listeners.append(listener)

    def _notify(self, event: str, **info: Any) -> None:
        for listener in list(self._listeners):
            listener(event, info)

    # -- tables --

    def create_table(self, definition: TableDef) -> TableId:
        with self._lock:
            if definition.name in self._tables:
                raise DuplicateTable(definition.name)
            table_id = TableId(len(self._tables) + 1)
            table = _Table(table_id, definition, self._version)
            self._tables[definition.name] = table
            self._by_id[table_id] = table
        logger.debug("table_created", table=definition.name, table_id=table_id)
        return table_id

    def table(self, ref: Union[TableId, str]) -> TableDef:
        return self._get(ref).definition

    def table_id(self, name: str) -> TableId:
        return self._get(name).id

    def tables(self) -> list[TableDef]:
        return [t.definition for t in self._tables.values()]

    def has_table(self, name: str) -> bool:
        return name in self._tables

    def _get(self, ref: Union[TableId, str]) -> _Table:
        table = self._tables.get(ref) if isinstance(ref, str) else self._by_id.get(ref)
        if table is None:
            raise UnknownTable(str(ref))
        return table

    def append_rows(self, ref: Union[TableId, str], rows: Iterable[Sequence[Any]]) -> SnapshotVersion:
        """Commit rows as one write batch and return the new version."""
        table = self._get(ref)
        checked = [self._check_row(table.definition, row) for row in rows]
        with self._lock:
            self._version += 1
            version = self._version
            table.rows.extend(checked)
            table.versions.extend([version] * len(checked))
        logger.debug("rows_appended", table=table.definition.name, rows=len(checked), snapshot=version)
        self._notify("appended", table=table.definition.name, version=version)
        return SnapshotVersion(version)

    @staticmethod
    def _check_row(definition: TableDef, row: Sequence[Any]) -> tuple:
        if len(row) != len(definition.columns):
            raise SchemaMismatch(
                f"table '{definition.name}' has {len(definition.columns)} columns, row has {len(row)}"
            )
        out = []
        for col, value in zip(definition.columns, row):
            if value is not None:
                if col.type != "bool" and isinstance(value, bool):
                    raise SchemaMismatch(f"column '{col.name}' expects {col.type}, got bool")
                if not isinstance(value, _PY_TYPES[col.type]):
                    raise SchemaMismatch(f"column '{col.name}' expects {col.type}, got {value!r}")
                if col.type == "float64":
                    value = float(value)
            out.append(value)
        return tuple(out)

    def scan(
        self,
        ref: Union[TableId, str],
        snapshot: Optional[int] = None,
        projection: Optional[Sequence[str]] = None,
        predicate: Optional[Expr] = None,
    ) -> RowSet:
        """Rows committed at versions <= snapshot, filtered then projected.

        ``predicate`` references bare column names of the table. Row order is
        insertion order.
        """
        table = self._get(ref)
        current = self._version
        if snapshot is None:
            snapshot = current
        if snapshot > current:
            raise FutureSnapshot(snapshot, current)
        definition = table.definition
        visible = bisect_right(table.versions, snapshot)
        rows = table.rows[:visible]
        versions = table.versions[:visible]
        index = {name: i for i, name in enumerate(definition.column_names)}
        if predicate is not None:
            keep = compile_predicate(predicate, index)
            pairs = [(r, v) for r, v in zip(rows, versions) if keep(r)]
            rows = [r for r, _ in pairs]
            versions = [v for _, v in pairs]
        columns = tuple(projection) if projection is not None else definition.column_names
        if columns != definition.column_names:
            positions = [definition.position(c) for c in columns]
            rows = [tuple(r[p] for p in positions) for r in rows]
        return RowSet(columns, list(rows), list(versions))

    def statistics(self, ref: Union[TableId, str], snapshot: Optional[int] = None) -> TableStats:
        """Row count, per-column distinct counts and mean token counts of text columns."""
        table = self._get(ref)
        snapshot = self._version if snapshot is None else snapshot
        cache_key = (table.id, bisect_right(table.versions, snapshot))
        cached = self._stats_cache.get(cache_key)
        if cached is not None:
            return cached
        rows = self.scan(ref, snapshot).rows
        distinct = {}
        avg_tokens = {}
        for pos, col in enumerate(table.definition.columns):
            values = [r[pos] for r in rows]
            distinct[col.name] = len(set(values))
            if col.type == "text":
                counts = [len(v.split()) for v in values if v is not None]
                avg_tokens[col.name] = sum(counts) / len(counts) if counts else 0.0
        stats = TableStats(len(rows), distinct, avg_tokens)
        self._stats_cache[cache_key] = stats
        return stats

    def load_csv(self, ref: Union[TableId, str], path: Path) -> SnapshotVersion:
        """Bulk-load a CSV with a header row; types come from the TableDef."""
        definition = self._get(ref).definition
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            header = reader.fieldnames or []
            missing = [c for c in definition.column_names if c not in header]
            if missing:
                raise SchemaMismatch(f"CSV {path} lacks columns {missing}")
            rows = []
            for line, rec in enumerate(reader, start=2):
                row = []
                for col in definition.columns:
                    try:
                        row.append(_coerce(rec[col.name], col.type))
                    except ValueError:
                        raise SchemaMismatch(
                            f"CSV {path} line {line}: column '{col.name}' expects {col.type}, got {rec[col.name]!r}"
                        ) from None
                rows.append(tuple(row))
        return self.append_rows(ref, rows)

    # -- models --

    def register_model(self, record: ModelRecord) -> tuple[str, int]:
        """Store a new immutable version of ``record.name``."""
        with self._lock:
            version = self._model_versions.get(record.name, 0) + 1
            self._model_versions[record.name] = version
            stored = replace(record, version=version, quality_profile=dict(record.quality_profile))
            self._models.setdefault(record.name, []).append(stored)
        logger.debug("model_registered", model=record.name, version=version, kind=record.kind)
        self._notify("model_registered", name=record.name, version=version)
        return record.name, version

    def get_model(self, name: str, version: Optional[int] = None) -> ModelRecord:
        versions = self._models.get(name)
        if not versions:
            raise UnknownModel(name)
        if version is None:
            return versions[-1]
        for record in versions:
            if record.version == version:
                return record
        raise UnknownModel(f"{name}@{version}")

    def models(self) -> list[ModelRecord]:
        return [versions[-1] for versions in self._models.values()]

    def drop_model(self, name: str) -> None:
        with self._lock:
            if name not in self._models:
                raise UnknownModel(name)
            del self._models[name]
        self._notify("model_dropped", name=name)

    # -- tenants --

    def register_tenant(self, policy: TenantPolicy) -> None:
        with self._lock:
            self._tenants[policy.tenant] = policy

    def tenant(self, tenant: str) -> TenantPolicy:
        try:
            return self._tenants[tenant]
        except KeyError:
            raise UnknownTenant(tenant) from None

    def check_access(self, tenant: str, obj: Union[str, tuple[str, str]]) -> bool:
        """True iff ``obj`` (a (table, column) pair or a model name) is allowed."""
        return self.tenant(tenant).allows(obj)


_TRUE = ("1", "true", "t", "yes")
_FALSE = ("0", "false", "f", "no")


def _coerce(raw: Optional[str], kind: str) -> Any:
    """Parse one CSV cell; raises ValueError on a malformed value."""
    if raw is None or raw == "":
        return None
    if kind == "int64":
        return int(raw)
    if kind == "float64":
        return float(raw)
    if kind == "bool":
        flag = raw.strip().lower()
        if flag in _TRUE or flag in _FALSE:
            return flag in _TRUE
        raise ValueError(f"not a boolean: {raw!r}")
    return raw
