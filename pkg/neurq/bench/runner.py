"""Benchmark runner: build a workload, submit it, run in virtual time, report.

Sharing modes map onto executor switches:

    full            CSE and one shared replica per model
    shared_model    shared replicas, CSE off
    per_task_model  one replica per tenant, tenant-isolated batches, CSE off
    sequential      tenants run one after another, one batch in flight each,
                    fixed batching, CSE off
    export          CSE off, every AI dispatch crosses a serial export link
"""

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import structlog

from neurq.bench.workloads import Workload, gen_workload_r, gen_workload_t
from neurq.config.types import BenchConfigDefaults
from neurq.database import Database
from neurq.errors import ConfigError
from neurq.executor.metrics import Metrics, write_csv
from neurq.settings import load_settings

logger = structlog.get_logger(__name__)

MODES: dict[str, dict[str, Any]] = {
    "full": {"executor": {"cse": True, "shared_model": True}},
    "shared_model": {"executor": {"cse": False, "shared_model": True}},
    "per_task_model": {
        "executor": {"cse": False, "shared_model": False, "tenant_isolation": True},
    },
    "sequential": {
        "executor": {
            "cse": False,
            "tenant_isolation": True,
            "tenant_sequential": True,
            "max_inflight_per_tenant": 1,
        },
        "batch_policy": {"kind": "fixed"},
    },
    "export": {"executor": {"cse": False, "export_execute": True}},
}

SWEEPABLE = ("engines", "seed", "tenants", "rows")


@dataclass
class BenchConfig:
    """One benchmark run.

    Unset sizes fall back to the ``bench`` section of the settings.
    """

    workload: str = "R"
    engines: int = 4
    mode: str = "full"
    policy: Optional[str] = None  # fixed | bucket; None keeps the settings value
    seed: int = 7
    rows: Optional[int] = None  # R: usage rows; T: rows per tenant
    users: Optional[int] = None
    queries: Optional[int] = None
    tenants: Optional[int] = None
    objective: Optional[str] = None

    def validate(self) -> None:
        if self.workload not in ("R", "T"):
            raise ConfigError(f"unknown workload {self.workload!r}; use R or T")
        if self.mode not in MODES:
            raise ConfigError(f"unknown sharing mode {self.mode!r}; use one of {', '.join(MODES)}")
        if self.policy not in (None, "fixed", "bucket"):
            raise ConfigError(f"unknown batch policy {self.policy!r}")
        if self.engines < 1:
            raise ConfigError("engines must be >= 1")
        if self.tenants is not None and self.tenants < 1:
            raise ConfigError("tenants must be >= 1")
        if self.rows is not None and self.rows <= 0:
            raise ConfigError("rows must be > 0")

    @property
    def config_id(self) -> str:
        policy = MODES[self.mode].get("batch_policy", {}).get("kind", self.policy or "default")
        return f"{self.workload}-{self.mode}-{policy}-e{self.engines}-s{self.seed}"

    def overrides(self) -> dict[str, Any]:
        """Settings overlay of this run."""
        data: dict[str, Any] = {"seed": self.seed, "executor": {"engines": self.engines}}
        if self.policy is not None:
            data["batch_policy"] = {"kind": self.policy}
        for section, values in MODES[self.mode].items():
            data.setdefault(section, {}).update(values)
        return data


@dataclass
class BenchRun:
    config: BenchConfig
    metrics: Metrics
    table_hash: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "config_id": self.config.config_id,
            "config": asdict(self.config),
            "table_hash": self.table_hash,
            "metrics": self.metrics.to_dict(),
        }


@dataclass
class BenchReport:
    runs: list[BenchRun] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"runs": [r.to_dict() for r in self.runs]}, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        rows = []
        for run in self.runs:
            rows.extend(run.metrics.csv_rows(run.config.config_id))
        return write_csv(rows)

    def write(self, out: Path) -> tuple[Path, Path]:
        """Write ``<out>.json`` and ``<out>.csv``."""
        out.parent.mkdir(parents=True, exist_ok=True)
        json_path = out.with_suffix(".json")
        csv_path = out.with_suffix(".csv")
        json_path.write_text(self.to_json() + "\n")
        csv_path.write_text(self.to_csv())
        return json_path, csv_path


def build_workload(config: BenchConfig, sizes: BenchConfigDefaults) -> Workload:
    if config.workload == "R":
        return gen_workload_r(
            config.rows or sizes.r_rows,
            config.users or sizes.r_users,
            config.queries or sizes.r_queries,
            config.seed,
        )
    return gen_workload_t(config.rows or sizes.t_rows_per_tenant, config.tenants or sizes.tenants, config.seed)


def run_bench(
    config: BenchConfig,
    settings_path: Optional[Path] = None,
    overrides: Iterable[Any] = (),
) -> BenchRun:
    """Generate the workload, submit every query at time zero and run to completion.

    Raises:
        ConfigError: for an invalid BenchConfig or settings
    """
    config.validate()
    settings = load_settings(settings_path, [*overrides, config.overrides()])
    workload = build_workload(config, settings.bench)
    db = Database(settings)
    try:
        workload.install(db)
        objective = db.objective(config.objective)
        for tenant, sql in workload.queries:
            plan = db.physical(sql, config.objective)
            db.executor.submit(plan, tenant, objective, at=0.0)
        metrics = db.run()
    finally:
        db.close()
    logger.info(
        "bench_run",
        config=config.config_id,
        makespan_ms=metrics.makespan_ms,
        throughput_qpm=metrics.throughput_qpm,
    )
    return BenchRun(config, metrics, workload.table_hash())


def parse_sweep(text: str) -> tuple[str, list[int]]:
    """``engines=1,2,4`` -> ("engines", [1, 2, 4])."""
    if "=" not in text:
        raise ConfigError(f"sweep must look like key=v1,v2,..., got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    if key not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {key!r}; use one of {', '.join(SWEEPABLE)}")
    try:
        values = [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"sweep values must be integers: {raw!r}") from None
    if not values:
        raise ConfigError(f"sweep {key!r} has no values")
    return key, values


def sweep(
    base: BenchConfig,
    key: str = "engines",
    values: Sequence[int] = (1, 2, 4, 8, 16),
    seeds: Sequence[int] = (),
    settings_path: Optional[Path] = None,
    overrides: Iterable[Any] = (),
) -> BenchReport:
    """One run per (value, seed); seeds default to the base config's."""
    overrides = list(overrides)
    report = BenchReport()
    for value in values:
        run_seeds = (value,) if key == "seed" else (seeds or (base.seed,))
        for seed in run_seeds:
            config = replace(base, **{key: value, "seed": seed})
            report.runs.append(run_bench(config, settings_path, overrides))
    return report
