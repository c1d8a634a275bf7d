"""Database facade: SQL in, rows out.

Wires the catalog, cache, model runtime, optimizer and executor of one
database instance. Statements are planned at the catalog version current
when they arrive and executed by a persistent executor, so the cache and
engine residency carry over from one statement to the next.
"""

from pathlib import Path
from typing import TYPE_CHECKING, Any, Mapping, Optional, Union

import structlog
import yaml

from neurq.cache import CacheManager, Tier
from neurq.catalog import Catalog, RowSet, TableDef, TenantPolicy
from neurq.errors import ConfigError
from neurq.executor import Executor, Metrics, QueryHandle, ReferenceInterpreter
from neurq.optimizer import (
    Objective,
    OptimizerContext,
    PhysicalOp,
    explain_physical,
    optimize,
    parse_objective,
)
from neurq.planner import apply_rewrites, explain, lower, pin
from neurq.planner.logical import LogicalOp, Scan
from neurq.resources import get_demo_manifest
from neurq.runtime.backends import ModelRuntime
from neurq.sql import parse
from neurq.sql.ast import CreateModel, DropModel
from neurq.sql.binder import bind

if TYPE_CHECKING:
    from neurq.config.types import NeurqConfig

logger = structlog.get_logger(__name__)


class Database:
    """One embeddable neurq instance.

    Args:
        config: Settings; the packaged defaults when omitted
    """

    def __init__(self, config: Optional["NeurqConfig"] = None):
        if config is None:
            from neurq.config.types import NeurqConfig

            config = NeurqConfig.default()
        self.config = config
        self.catalog = Catalog()
        self.cache = CacheManager(config.cache)
        self.cache.attach(self.catalog)
        self.runtime = ModelRuntime(config, self.cache)
        self.executor = Executor(config, self.catalog, self.runtime, self.cache)

    # -- loading --

    @classmethod
    def from_manifest(
        cls,
        source: Union[Path, str, None] = None,
        config: Optional["NeurqConfig"] = None,
    ) -> "Database":
        """Build a database from a YAML manifest (the built-in demo when omitted).

        The manifest has ``tables`` (columns, primary key, inline ``rows``
        and/or a ``csv`` path relative to the manifest), ``models`` (CREATE
        MODEL statements, run after the tables load) and ``tenants``.

        Raises:
            ConfigError: if the manifest is not a mapping
        """
        base = Path.cwd()
        if source is None:
            text = get_demo_manifest()
        elif isinstance(source, Path):
            text = source.read_text()
            base = source.parent
        else:
            text = source
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigError("database manifest must be a mapping")
        db = cls(config)
        for name, entry in (data.get("tables") or {}).items():
            db.catalog.create_table(TableDef.from_dict(name, entry))
            if entry.get("rows"):
                db.catalog.append_rows(name, entry["rows"])
            if entry.get("csv"):
                db.catalog.load_csv(name, base / entry["csv"])
        for statement in data.get("models") or []:
            db.execute(statement)
        for tenant, entry in (data.get("tenants") or {}).items():
            db.catalog.register_tenant(TenantPolicy.from_dict(tenant, entry or {}))
        logger.info("database_loaded", tables=len(db.catalog.tables()), models=len(db.catalog.models()))
        return db

    def load_csv(self, table: str, path: Path) -> int:
        """Append a CSV to ``table``; returns the new snapshot version."""
        return self.catalog.load_csv(table, path)

    # -- planning --

    def plan(
        self,
        sql: str,
        params: Optional[Mapping[str, Any]] = None,
        tenant: Optional[str] = None,
    ) -> LogicalOp:
        """Parse, bind, lower, rewrite and pin a query at the current version."""
        bound = bind(parse(sql), self.catalog, params, tenant)
        plan = lower(bound)
        rewritten = apply_rewrites(plan, max_passes=self.config.optimizer.rewrite_passes)
        return pin(rewritten.plan, self.catalog.version)

    def explain(self, sql: str, params: Optional[Mapping[str, Any]] = None, tenant: Optional[str] = None) -> str:
        return explain(self.plan(sql, params, tenant))

    def objective(self, text: Optional[str] = None) -> Objective:
        return parse_objective(text or self.config.optimizer.objective)

    def context(self, plan: LogicalOp) -> OptimizerContext:
        """Optimizer inputs at the plan's snapshot: table stats and engine residency."""
        snapshot = next((n.snapshot for n in plan.walk() if isinstance(n, Scan)), None)
        tables = sorted({n.table for n in plan.walk() if isinstance(n, Scan)})
        stats = {t: self.catalog.statistics(t, snapshot) for t in tables}
        return OptimizerContext(
            self.config, stats, self.catalog, self.runtime, self.executor.residency()
        )

    def physical(
        self,
        sql: str,
        objective: Optional[str] = None,
        params: Optional[Mapping[str, Any]] = None,
        tenant: Optional[str] = None,
    ) -> PhysicalOp:
        """Chosen physical plan, with cached subplans substituted.

        Raises:
            Infeasible: if no plan meets the objective
        """
        plan = self.plan(sql, params, tenant)
        read_cost = {tier: self.cache.read_cost(tier) for tier in Tier}
        index = self.cache.snapshot_index() if self.cache.config.enabled else None
        return optimize(plan, self.context(plan), self.objective(objective), index, read_cost)

    def explain_physical(self, sql: str, objective: Optional[str] = None, **kwargs: Any) -> str:
        return explain_physical(self.physical(sql, objective, **kwargs))

    # -- execution --

    def submit(
        self,
        sql: str,
        tenant: Optional[str] = None,
        objective: Optional[str] = None,
        params: Optional[Mapping[str, Any]] = None,
        at: Optional[float] = None,
    ) -> QueryHandle:
        """Plan a query and hand it to the executor; call ``run`` to drive it."""
        plan = self.physical(sql, objective, params, tenant)
        return self.executor.submit(plan, tenant or "default", self.objective(objective), at)

    def run(self) -> Metrics:
        return self.executor.run()

    def execute(
        self,
        sql: str,
        tenant: Optional[str] = None,
        objective: Optional[str] = None,
        params: Optional[Mapping[str, Any]] = None,
    ) -> RowSet:
        """Run one statement to completion.

        CREATE MODEL and DROP MODEL act on the catalog directly and return a
        one-row status.
        """
        statement = parse(sql)
        if isinstance(statement, (CreateModel, DropModel)):
            bind(statement, self.catalog, params, tenant)
            return self._model_statement(statement)
        handle = self.submit(sql, tenant, objective, params)
        self.run()
        return handle.result()

    def reference(self, sql: str, params: Optional[Mapping[str, Any]] = None, tenant: Optional[str] = None) -> RowSet:
        """Evaluate with the single-threaded reference interpreter."""
        plan = self.plan(sql, params, tenant)
        return ReferenceInterpreter(self.catalog, self.runtime).execute(plan)

    def _model_statement(self, statement: Union[CreateModel, DropModel]) -> RowSet:
        if isinstance(statement, DropModel):
            self.catalog.drop_model(statement.name)
            return RowSet(("status",), [(f"dropped model {statement.name}",)], [self.catalog.version])
        columns = list(statement.features) + ([statement.target] if statement.target else [])
        rows = self.catalog.scan(statement.table, projection=columns).rows
        width = len(statement.features)
        record = self.runtime.create_model(
            statement.name,
            statement.kind,
            statement.features,
            [r[:width] for r in rows],
            target_column=statement.target,
            target=[r[width] for r in rows] if statement.target else (),
            table=statement.table,
        )
        name, version = self.catalog.register_model(record)
        return RowSet(("status",), [(f"created model {name}@{version}",)], [self.catalog.version])

    def close(self) -> None:
        self.executor.shutdown()
