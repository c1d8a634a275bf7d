"""Exception hierarchy for neurq.

Every error raised by the engine derives from NeurqError. Each module owns
one family so callers can catch at the granularity they need:

- CatalogError: storage, schema and model catalog problems
- SqlError: parse and bind failures (rendered as ``line:col: message``)
- PlanError / OptimizerError: planning and physical search
- CacheError, ModelRuntimeError, ExecutionError
"""

from typing import Any, Optional


class NeurqError(Exception):
    """Base class for all neurq errors."""


class ConfigError(NeurqError):
    """Invalid settings or database manifest."""


# Catalog


class CatalogError(NeurqError):
    """Storage or catalog failure."""


class DuplicateTable(CatalogError):
    def __init__(self, name: str):
        super().__init__(f"table '{name}' already exists")
        self.name = name


class UnknownTable(CatalogError):
    def __init__(self, name: str):
        super().__init__(f"unknown table '{name}'")
        self.name = name


class UnknownColumn(CatalogError):
    def __init__(self, name: str, table: Optional[str] = None):
        where = f" in '{table}'" if table else ""
        super().__init__(f"unknown column '{name}'{where}")
        self.name = name
        self.table = table


class UnknownModel(CatalogError):
    def __init__(self, name: str):
        super().__init__(f"unknown model '{name}'")
        self.name = name


class UnknownTenant(CatalogError):
    def __init__(self, tenant: str):
        super().__init__(f"unknown tenant '{tenant}'")
        self.tenant = tenant


class SchemaMismatch(CatalogError):
    """Row arity or value types do not match the table schema."""


class FutureSnapshot(CatalogError):
    def __init__(self, requested: int, current: int):
        super().__init__(f"snapshot {requested} is ahead of current version {current}")
        self.requested = requested
        self.current = current


class AccessDenied(NeurqError):
    def __init__(self, tenant: str, obj: str):
        super().__init__(f"tenant '{tenant}' may not access {obj}")
        self.tenant = tenant
        self.obj = obj


# SQL


class SqlError(NeurqError):
    """Parse or bind failure."""


class SqlSyntaxError(SqlError):
    """Malformed SQL, positioned at a 1-based line and column."""

    def __init__(self, line: int, column: int, expected: set[str] | frozenset[str], found: str = ""):
        self.line = line
        self.column = column
        self.expected = frozenset(expected)
        self.found = found
        options = ", ".join(sorted(self.expected))
        got = f", found {found!r}" if found else ""
        super().__init__(f"{line}:{column}: expected {options}{got}")


class BindError(SqlError):
    """Name resolution failure."""


class TypeMismatch(BindError):
    pass


class AmbiguousColumn(BindError):
    def __init__(self, name: str):
        super().__init__(f"column reference '{name}' is ambiguous")
        self.name = name


# Planner / optimizer


class PlanError(NeurqError):
    pass


class UnpinnedPlan(PlanError):
    def __init__(self, node: str):
        super().__init__(f"{node} has no snapshot pin")


class OptimizerError(NeurqError):
    pass


class MissingStats(OptimizerError):
    def __init__(self, table: str):
        super().__init__(f"no statistics for table '{table}'")
        self.table = table


class MissingProfile(OptimizerError):
    def __init__(self, model: str):
        super().__init__(f"no cost profile for model '{model}'")
        self.model = model


class Infeasible(OptimizerError):
    """No candidate satisfies the objective; carries the closest CostQuality."""

    def __init__(self, best: Any, objective: Any):
        super().__init__(f"no plan satisfies {objective}; best available is {best}")
        self.best = best
        self.objective = objective


# Cache


class CacheError(NeurqError):
    pass


class TooLarge(CacheError):
    def __init__(self, size_mb: float, largest_mb: float):
        super().__init__(f"entry of {size_mb} MB exceeds the largest tier ({largest_mb} MB)")
        self.size_mb = size_mb
        self.largest_mb = largest_mb


# Model runtime


class ModelRuntimeError(NeurqError):
    pass


class DegenerateInput(ModelRuntimeError):
    pass


class ArityMismatch(ModelRuntimeError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"expected {expected} input features, got {got}")
        self.expected = expected
        self.got = got


class EmptyMask(ModelRuntimeError):
    pass


# Executor


class ExecutionError(NeurqError):
    pass


class AdmissionRejected(ExecutionError):
    def __init__(self, depth: int):
        super().__init__(f"admission queue is full ({depth} queries)")
        self.depth = depth


class EngineOverloaded(ExecutionError):
    def __init__(self, engine: str, reason: str):
        super().__init__(f"engine {engine} cannot take the batch: {reason}")
        self.engine = engine
        self.reason = reason


class EngineFault(ExecutionError):
    def __init__(self, engine: str, batch_id: int):
        super().__init__(f"simulated fault on engine {engine} running batch {batch_id}")
        self.engine = engine
        self.batch_id = batch_id


class DeadlockError(ExecutionError):
    """No runnable work while queries are still pending."""

    def __init__(self, dump: str):
        super().__init__(f"executor deadlocked:\n{dump}")
        self.dump = dump
