"""Configuration types for neurq.

Settings are parsed from YAML into typed dataclasses:
- executor: engines, budgets, thresholds, sharing switches
- batch_policy: fixed (FIFO) or bucket batching
- cache: tier capacities and read costs, score decay
- db_costs / models: cost constants shared by optimizer and simulator
- runtime, optimizer, logging

Single source of truth: neurq/config/defaults/settings.yaml
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from neurq.errors import ConfigError, MissingProfile
from neurq.runtime.costs import CostProfile

MODEL_KINDS = ("ridge_regressor", "hash_embedder", "generative_mock")
TIER_NAMES = ("t0", "t1", "t2")


@dataclass
class OpCost:
    """Latency constants of one relational operator."""
    setup: float = 0.0
    per_row: float = 0.0

    @classmethod
    def from_dict(cls, data: dict) -> "OpCost":
        return cls(
            setup=float(data.get("setup_ms", 0.0)),
            per_row=float(data.get("per_row_ms", 0.0)),
        )

    def latency(self, rows: float) -> float:
        return self.setup + self.per_row * rows


@dataclass
class DbCostConfig:
    """Relational cost model and cardinality constants."""
    scan: OpCost = field(default_factory=OpCost)
    filter: OpCost = field(default_factory=OpCost)
    project: OpCost = field(default_factory=OpCost)
    hash_join: OpCost = field(default_factory=OpCost)
    merge_join: OpCost = field(default_factory=OpCost)
    nested_loop: OpCost = field(default_factory=OpCost)  # per_row is per pair
    hash_aggregate: OpCost = field(default_factory=OpCost)
    sort: OpCost = field(default_factory=OpCost)
    limit: OpCost = field(default_factory=OpCost)
    values: OpCost = field(default_factory=OpCost)
    hash_memory_rows: int = 1_000_000
    range_selectivity: float = 1 / 3
    row_width_bytes: int = 64

    OPS = (
        "scan", "filter", "project", "hash_join", "merge_join", "nested_loop",
        "hash_aggregate", "sort", "limit", "values",
    )

    @classmethod
    def from_dict(cls, data: dict) -> "DbCostConfig":
        ops = {name: OpCost.from_dict(data.get(name, {})) for name in cls.OPS}
        return cls(
            **ops,
            hash_memory_rows=int(data.get("hash_memory_rows", 1_000_000)),
            range_selectivity=float(data.get("range_selectivity", 1 / 3)),
            row_width_bytes=int(data.get("row_width_bytes", 64)),
        )


@dataclass
class ModelCostConfig:
    """Cost profiles per model kind plus the staged-pipeline stages.

    ``base_lambdas`` are the ridge penalties the staged pipeline selects
    its base model from; ``relation_modeling`` and ``fusion`` cost the two
    stages after it.
    """
    profiles: dict[str, CostProfile] = field(default_factory=dict)
    base_lambdas: list[float] = field(default_factory=lambda: [0.1, 1.0, 10.0])
    relation_modeling: CostProfile = field(default_factory=CostProfile)
    fusion: CostProfile = field(default_factory=CostProfile)
    default_quality: dict[str, float] = field(
        default_factory=lambda: {"direct": 0.8, "staged": 0.9}
    )

    @classmethod
    def from_dict(cls, data: dict) -> "ModelCostConfig":
        profiles = {}
        for kind, p_data in data.get("profiles", {}).items():
            if kind not in MODEL_KINDS:
                raise ConfigError(f"unknown model kind in profiles: {kind}")
            profiles[kind] = CostProfile.from_dict(p_data or {})
        stages = data.get("stages", {})
        lambdas = [float(v) for v in stages.get("base_lambdas", [0.1, 1.0, 10.0])]
        if not lambdas or any(v <= 0 for v in lambdas):
            raise ConfigError("models.stages.base_lambdas must be a non-empty list of values > 0")
        try:
            relation = CostProfile.from_dict(stages.get("relation_modeling") or {})
            fusion = CostProfile.from_dict(stages.get("fusion") or {})
        except ValueError as exc:
            raise ConfigError(f"models.stages: {exc}") from None
        return cls(
            profiles=profiles,
            base_lambdas=lambdas,
            relation_modeling=relation,
            fusion=fusion,
            default_quality={
                k: float(v)
                for k, v in data.get("default_quality", {"direct": 0.8, "staged": 0.9}).items()
            },
        )

    def profile_for(self, kind: str) -> CostProfile:
        try:
            return self.profiles[kind]
        except KeyError:
            raise MissingProfile(kind) from None


@dataclass
class TierConfig:
    """Capacity and read cost of one cache tier."""
    capacity_mb: float
    read_cost: float  # ms per MB

    @classmethod
    def from_dict(cls, data: dict) -> "TierConfig":
        return cls(
            capacity_mb=float(data.get("capacity_mb", 0.0)),
            read_cost=float(data.get("read_cost_ms_per_mb", 0.0)),
        )


@dataclass
class CacheConfig:
    """Multi-tier cache settings."""
    tiers: dict[str, TierConfig] = field(default_factory=dict)
    transfer_cost: float = 0.1  # ms per MB between tiers
    decay: float = 0.99  # per simulated ms
    enabled: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "CacheConfig":
        tiers = {}
        for name in TIER_NAMES:
            if name not in data.get("tiers", {}):
                raise ConfigError(f"cache.tiers.{name} is required")
            tiers[name] = TierConfig.from_dict(data["tiers"][name])
        config = cls(
            tiers=tiers,
            transfer_cost=float(data.get("transfer_cost_ms_per_mb", 0.1)),
            decay=float(data.get("decay_per_ms", 0.99)),
            enabled=bool(data.get("enabled", True)),
        )
        config.validate()
        return config

    def validate(self) -> None:
        costs = [self.tiers[name].read_cost for name in TIER_NAMES]
        if any(self.tiers[name].capacity_mb <= 0 for name in TIER_NAMES):
            raise ConfigError("cache tier capacities must be > 0")
        if not costs[0] < costs[1] < costs[2]:
            raise ConfigError("cache read costs must satisfy t0 < t1 < t2")
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("cache.decay_per_ms must be in (0, 1]")


@dataclass
class BatchPolicyConfig:
    """Dynamic batching policy: fixed FIFO or length-aware bucket."""
    kind: str = "fixed"
    max_items: int = 8
    window_ms: float = 10.0
    boundaries: list[int] = field(default_factory=lambda: [16, 32, 64])
    merge_period_ms: float = 1000.0

    @classmethod
    def from_dict(cls, data: dict) -> "BatchPolicyConfig":
        config = cls(
            kind=data.get("kind", "fixed"),
            max_items=int(data.get("max_items", 8)),
            window_ms=float(data.get("window_ms", 10.0)),
            boundaries=[int(b) for b in data.get("boundaries", [16, 32, 64])],
            merge_period_ms=float(data.get("merge_period_ms", 1000.0)),
        )
        config.validate()
        return config

    def validate(self) -> None:
        if self.kind not in ("fixed", "bucket"):
            raise ConfigError(f"unknown batch policy: {self.kind}")
        if self.max_items < 1:
            raise ConfigError("batch_policy.max_items must be >= 1")
        if self.window_ms <= 0:
            raise ConfigError("batch_policy.window_ms must be > 0")
        if any(b >= c for b, c in zip(self.boundaries, self.boundaries[1:])):
            raise ConfigError("batch_policy.boundaries must be strictly ascending")


@dataclass
class ExecutorConfig:
    """Engines, budgets and sharing switches of the executor."""
    engines: int = 4
    token_budget: int = 4096
    memory_budget_mb: float = 8192.0
    queue_depth: int = 1024
    overload_threshold: float = 0.8
    rebalance_gap: float = 0.2
    transfer_cost_ms_per_mb: float = 0.5
    cse: bool = True
    shared_model: bool = True
    tenant_isolation: bool = False  # batches never mix tenants
    tenant_sequential: bool = False  # a tenant starts when the previous one drains
    max_inflight_per_tenant: Optional[int] = None
    export_execute: bool = False  # every AI dispatch crosses one export link
    export_latency_ms: float = 2.0
    fault_rate: float = 0.0
    mode: str = "virtual_time"
    real_time_scale: float = 0.001  # wall seconds per simulated ms
    materialize: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "ExecutorConfig":
        config = cls(
            engines=int(data.get("engines", 4)),
            token_budget=int(data.get("token_budget", 4096)),
            memory_budget_mb=float(data.get("memory_budget_mb", 8192.0)),
            queue_depth=int(data.get("queue_depth", 1024)),
            overload_threshold=float(data.get("overload_threshold", 0.8)),
            rebalance_gap=float(data.get("rebalance_gap", 0.2)),
            transfer_cost_ms_per_mb=float(data.get("transfer_cost_ms_per_mb", 0.5)),
            cse=bool(data.get("cse", True)),
            shared_model=bool(data.get("shared_model", True)),
            tenant_isolation=bool(data.get("tenant_isolation", False)),
            tenant_sequential=bool(data.get("tenant_sequential", False)),
            max_inflight_per_tenant=data.get("max_inflight_per_tenant"),
            export_execute=bool(data.get("export_execute", False)),
            export_latency_ms=float(data.get("export_latency_ms", 2.0)),
            fault_rate=float(data.get("fault_rate", 0.0)),
            mode=data.get("mode", "virtual_time"),
            real_time_scale=float(data.get("real_time_scale", 0.001)),
            materialize=bool(data.get("materialize", True)),
        )
        config.validate()
        return config

    def validate(self) -> None:
        if self.engines < 1:
            raise ConfigError("executor.engines must be >= 1")
        if self.token_budget < 1 or self.memory_budget_mb <= 0:
            raise ConfigError("executor budgets must be positive")
        if not 0.0 < self.overload_threshold <= 1.0:
            raise ConfigError("executor.overload_threshold must be in (0, 1]")
        if self.mode not in ("virtual_time", "real_time"):
            raise ConfigError(f"unknown executor mode: {self.mode}")
        if not 0.0 <= self.fault_rate < 1.0:
            raise ConfigError("executor.fault_rate must be in [0, 1)")

    def engine_ids(self) -> list[str]:
        return [f"e{i}" for i in range(self.engines)]


@dataclass
class RuntimeConfig:
    """Model runtime constants."""
    embedding_dim: int = 64
    hash_buckets: int = 32
    ridge_lambda: float = 1.0
    holdout_fraction: float = 0.2
    min_holdout_rows: int = 20  # below this, quality is cross-validated
    max_folds: int = 5
    profile_max_features: int = 6  # every feature mask is profiled up to this width

    @classmethod
    def from_dict(cls, data: dict) -> "RuntimeConfig":
        config = cls(
            embedding_dim=int(data.get("embedding_dim", 64)),
            hash_buckets=int(data.get("hash_buckets", 32)),
            ridge_lambda=float(data.get("ridge_lambda", 1.0)),
            holdout_fraction=float(data.get("holdout_fraction", 0.2)),
            min_holdout_rows=int(data.get("min_holdout_rows", 20)),
            max_folds=int(data.get("max_folds", 5)),
            profile_max_features=int(data.get("profile_max_features", 6)),
        )
        config.validate()
        return config

    def validate(self) -> None:
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("runtime.holdout_fraction must be in (0, 1)")
        if self.min_holdout_rows < 1:
            raise ConfigError("runtime.min_holdout_rows must be >= 1")
        if self.max_folds < 2:
            raise ConfigError("runtime.max_folds must be >= 2")
        if self.profile_max_features < 1:
            raise ConfigError("runtime.profile_max_features must be >= 1")


@dataclass
class OptimizerConfig:
    frontier_cap: int = 32
    rewrite_passes: int = 10
    objective: str = "quality>=0.0"

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerConfig":
        return cls(
            frontier_cap=int(data.get("frontier_cap", 32)),
            rewrite_passes=int(data.get("rewrite_passes", 10)),
            objective=str(data.get("objective", "quality>=0.0")),
        )


@dataclass
class BenchConfigDefaults:
    """Desk-scale sizes of the benchmark workloads."""
    r_rows: int = 20000
    r_users: int = 500
    r_queries: int = 16
    t_rows_per_tenant: int = 2000
    tenants: int = 8

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfigDefaults":
        return cls(
            r_rows=int(data.get("r_rows", 20000)),
            r_users=int(data.get("r_users", 500)),
            r_queries=int(data.get("r_queries", 16)),
            t_rows_per_tenant=int(data.get("t_rows_per_tenant", 2000)),
            tenants=int(data.get("tenants", 8)),
        )


@dataclass
class LoggingConfig:
    level: str = "WARNING"
    json: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "LoggingConfig":
        return cls(level=data.get("level", "WARNING"), json=bool(data.get("json", False)))


@dataclass
class NeurqConfig:
    """neurq settings - single source of truth.

    Loaded from neurq/config/defaults/settings.yaml, optionally overlaid by
    a user file and CLI flags (see neurq.settings).
    """
    version: int = 1
    seed: int = 7
    executor: ExecutorConfig = field(default_factory=ExecutorConfig)
    batch_policy: BatchPolicyConfig = field(default_factory=BatchPolicyConfig)
    cache: CacheConfig = field(default_factory=CacheConfig)
    db_costs: DbCostConfig = field(default_factory=DbCostConfig)
    models: ModelCostConfig = field(default_factory=ModelCostConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    bench: BenchConfigDefaults = field(default_factory=BenchConfigDefaults)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "NeurqConfig":
        """Create from dictionary (parsed YAML)."""
        return cls(
            version=int(data.get("version", 1)),
            seed=int(data.get("seed", 7)),
            executor=ExecutorConfig.from_dict(data.get("executor", {})),
            batch_policy=BatchPolicyConfig.from_dict(data.get("batch_policy", {})),
            cache=CacheConfig.from_dict(data.get("cache", {})),
            db_costs=DbCostConfig.from_dict(data.get("db_costs", {})),
            models=ModelCostConfig.from_dict(data.get("models", {})),
            runtime=RuntimeConfig.from_dict(data.get("runtime", {})),
            optimizer=OptimizerConfig.from_dict(data.get("optimizer", {})),
            bench=BenchConfigDefaults.from_dict(data.get("bench", {})),
            logging=LoggingConfig.from_dict(data.get("logging", {})),
        )

    @classmethod
    def from_yaml(cls, path: Path) -> "NeurqConfig":
        """Load a complete settings file (no defaults merged)."""
        data = yaml.safe_load(path.read_text()) or {}
        return cls.from_dict(data)

    @classmethod
    def default(cls) -> "NeurqConfig":
        """Load default configuration from package resource."""
        from neurq.resources import get_default_settings_yaml
        data = yaml.safe_load(get_default_settings_yaml()) or {}
        return cls.from_dict(data)

    @classmethod
    def write_defaults(cls, path: Path) -> None:
        """Copy the packaged defaults to ``path``."""
        from neurq.resources import get_default_settings_yaml
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(get_default_settings_yaml())
