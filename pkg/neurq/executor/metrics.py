"""Run metrics and their JSON / CSV forms."""

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np


@dataclass
class QueryRecord:
    id: int
    tenant: str
    submitted: float
    admitted: Optional[float] = None
    finished: Optional[float] = None
    error: Optional[str] = None

    @property
    def latency(self) -> Optional[float]:
        return None if self.finished is None else self.finished - self.submitted


def percentiles(values: list[float]) -> dict[str, float]:
    if not values:
        return {"p50": 0.0, "p95": 0.0, "p99": 0.0}
    arr = np.asarray(values, dtype=float)
    return {f"p{p}": round(float(np.percentile(arr, p)), 6) for p in (50, 95, 99)}


@dataclass
class Metrics:
    """Outcome of one executor run; times are simulated ms."""

    makespan_ms: float = 0.0
    queries: int = 0
    completed: int = 0
    failed: int = 0
    throughput_qpm: float = 0.0
    tenant_throughput_qpm: dict[str, float] = field(default_factory=dict)
    latency_ms: dict[str, float] = field(default_factory=dict)
    tenant_latency_ms: dict[str, dict[str, float]] = field(default_factory=dict)
    batches: int = 0
    items: int = 0
    tokens: int = 0
    padding_tokens: int = 0
    cse_hits: int = 0
    shared_nodes: int = 0
    executions: int = 0
    migrations: int = 0
    no_capacity: int = 0
    faults: int = 0
    splits: int = 0
    engine_peak_memory_mb: dict[str, float] = field(default_factory=dict)
    engine_busy_ms: dict[str, float] = field(default_factory=dict)
    cache: dict[str, Any] = field(default_factory=dict)

    @property
    def padding_fraction(self) -> float:
        total = self.tokens + self.padding_tokens
        return self.padding_tokens / total if total else 0.0

    @property
    def peak_memory_mb(self) -> float:
        """Highest peak of any single engine."""
        return max(self.engine_peak_memory_mb.values(), default=0.0)

    @property
    def total_peak_memory_mb(self) -> float:
        return round(sum(self.engine_peak_memory_mb.values()), 6)

    @classmethod
    def summarize(cls, records: list[QueryRecord], **counters: Any) -> "Metrics":
        done = [r for r in records if r.finished is not None and r.error is None]
        metrics = cls(**counters)
        metrics.queries = len(records)
        metrics.completed = len(done)
        metrics.failed = sum(1 for r in records if r.error is not None)
        start = min((r.submitted for r in records), default=0.0)
        if done:
            metrics.makespan_ms = round(max(r.finished for r in done) - start, 6)
        minutes = metrics.makespan_ms / 60000.0
        metrics.throughput_qpm = round(len(done) / minutes, 6) if minutes > 0 else 0.0
        metrics.latency_ms = percentiles([r.latency for r in done])
        tenants = sorted({r.tenant for r in records})
        for tenant in tenants:
            mine = [r for r in done if r.tenant == tenant]
            span = (max((r.finished for r in mine), default=start) - start) / 60000.0
            metrics.tenant_throughput_qpm[tenant] = round(len(mine) / span, 6) if span > 0 else 0.0
            metrics.tenant_latency_ms[tenant] = percentiles([r.latency for r in mine])
        return metrics

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["padding_fraction"] = round(self.padding_fraction, 6)
        data["peak_memory_mb"] = self.peak_memory_mb
        data["total_peak_memory_mb"] = self.total_peak_memory_mb
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self, config: str) -> list[tuple[str, str, str, Any]]:
        """(config_id, tenant, metric, value) rows; run-wide metrics use tenant ``*``."""
        rows: list[tuple[str, str, str, Any]] = []
        for name in (
            "makespan_ms", "queries", "completed", "failed", "throughput_qpm", "batches",
            "items", "tokens", "padding_tokens", "cse_hits", "shared_nodes", "executions",
            "migrations", "no_capacity", "faults", "splits",
        ):
            rows.append((config, "*", name, getattr(self, name)))
        rows.append((config, "*", "padding_fraction", round(self.padding_fraction, 6)))
        rows.append((config, "*", "peak_memory_mb", self.peak_memory_mb))
        rows.append((config, "*", "total_peak_memory_mb", self.total_peak_memory_mb))
        for kind, hits in self.cache.get("hits", {}).items():
            rows.append((config, "*", f"cache_hits[{kind}]", hits))
        for p, v in self.latency_ms.items():
            rows.append((config, "*", f"latency_{p}_ms", v))
        for tenant, qpm in self.tenant_throughput_qpm.items():
            rows.append((config, tenant, "throughput_qpm", qpm))
            for p, v in self.tenant_latency_ms.get(tenant, {}).items():
                rows.append((config, tenant, f"latency_{p}_ms", v))
        for engine, mb in self.engine_peak_memory_mb.items():
            rows.append((config, "*", f"peak_memory_mb[{engine}]", mb))
        return rows


def write_csv(rows: list[tuple[str, str, str, Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("config_id", "tenant", "metric", "value"))
    writer.writerows(rows)
    return buffer.getvalue()
