"""Physical plans, cost/quality pairs and objectives."""

import hashlib
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterator, Optional

from neurq.cache import CacheKey
from neurq.errors import OptimizerError
from neurq.planner.fingerprint import fingerprint
from neurq.planner.logical import LogicalOp

DB_IMPLS = (
    "FullScan", "FilteredScan", "Filter", "Project", "HashJoin", "MergeJoin",
    "NestedLoopJoin", "HashAggregate", "Sort", "Limit", "Values",
)
AI_IMPLS = ("Train", "AIInfer")
CACHE_READ = "CacheRead"
ANY_ENGINE = "any"


@dataclass(frozen=True)
class CostQuality:
    """Estimated latency (simulated ms) and quality in [0, 1]."""

    latency: float
    quality: float = 1.0

    def dominates(self, other: "CostQuality") -> bool:
        return (
            self.latency <= other.latency
            and self.quality >= other.quality
            and (self.latency < other.latency or self.quality > other.quality)
        )

    def __str__(self) -> str:
        return f"({self.latency:.3f}ms, q={self.quality:.3f})"


@dataclass(frozen=True)
class Objective:
    """Bounded objective: min latency s.t. quality >= bound, or max quality s.t. latency <= bound."""

    mode: str  # min_latency | max_quality
    bound: float

    def __post_init__(self) -> None:
        if self.mode == "min_latency" and not 0.0 <= self.bound <= 1.0:
            raise OptimizerError(f"quality bound must be in [0, 1], got {self.bound}")
        if self.mode == "max_quality" and self.bound <= 0:
            raise OptimizerError(f"latency bound must be > 0, got {self.bound}")
        if self.mode not in ("min_latency", "max_quality"):
            raise OptimizerError(f"unknown objective mode {self.mode}")

    @classmethod
    def min_latency(cls, q_min: float) -> "Objective":
        return cls("min_latency", q_min)

    @classmethod
    def max_quality(cls, l_max: float) -> "Objective":
        return cls("max_quality", l_max)

    def feasible(self, cq: CostQuality) -> bool:
        if self.mode == "min_latency":
            return cq.quality >= self.bound
        return cq.latency <= self.bound

    def __str__(self) -> str:
        if self.mode == "min_latency":
            return f"quality>={self.bound:g}"
        return f"latency<={self.bound:g}ms"


_OBJECTIVE = re.compile(r"^\s*(quality|latency)\s*>?<?=\s*([0-9.eE+-]+)\s*(ms)?\s*$")


def parse_objective(text: str) -> Objective:
    """Parse ``quality>=0.9`` or ``latency<=100ms``."""
    match = _OBJECTIVE.match(text)
    if match is None:
        raise OptimizerError(f"cannot parse objective {text!r}; use quality>=Q or latency<=Lms")
    what, value = match.group(1), float(match.group(2))
    if what == "quality":
        if ">=" not in text:
            raise OptimizerError(f"quality objectives are lower bounds: {text!r}")
        return Objective.min_latency(value)
    if "<=" not in text:
        raise OptimizerError(f"latency objectives are upper bounds: {text!r}")
    return Objective.max_quality(value)


@dataclass(frozen=True, eq=False)
class PhysicalOp:
    """One physical operator with its estimates.

    Attributes:
        impl: Implementation (HashJoin, AIInfer, CacheRead, ...)
        logical: The logical node this implements
        children: Physical inputs
        variant: AI pipeline variant, direct or staged
        engine: Placement hint, an engine id or ``any``
        batch_hint: Preferred micro-batch size for AI nodes
        cost: Own estimated latency
        quality: Own quality (1.0 for DB operators)
        rows: Estimated output cardinality
        total: Plan-total CostQuality of the subtree
        cache_key: Entry read by a CacheRead leaf
        replaced: Subtree a CacheRead stands for (fallback on a miss)
        cached_weights: OptimizerState entry holding trained weights
    """

    impl: str
    logical: LogicalOp
    children: tuple["PhysicalOp", ...] = ()
    variant: str = "direct"
    engine: str = ANY_ENGINE
    batch_hint: int = 0
    cost: float = 0.0
    quality: float = 1.0
    rows: float = 0.0
    total: CostQuality = field(default=CostQuality(0.0))
    cache_key: Optional[CacheKey] = None
    replaced: Optional["PhysicalOp"] = None
    cached_weights: Optional[CacheKey] = None

    @staticmethod
    def combine(cost: float, quality: float, children: tuple["PhysicalOp", ...]) -> CostQuality:
        """Own cost after the slowest child; quality is the minimum over the subtree."""
        latency = cost + max((c.total.latency for c in children), default=0.0)
        q = min([quality] + [c.total.quality for c in children])
        return CostQuality(latency, q)

    def retotal(self) -> "PhysicalOp":
        return replace(self, total=self.combine(self.cost, self.quality, self.children))

    def with_children(self, children: tuple["PhysicalOp", ...]) -> "PhysicalOp":
        return replace(self, children=children, total=self.combine(self.cost, self.quality, children))

    @cached_property
    def node_count(self) -> int:
        return 1 + sum(c.node_count for c in self.children)

    @cached_property
    def logical_fingerprint(self) -> str:
        return fingerprint(self.logical, strict=False)

    @cached_property
    def physical_fingerprint(self) -> str:
        text = (
            f"{self.impl}/{self.variant}/{self.engine}/{self.logical_fingerprint}"
            f"({','.join(c.physical_fingerprint for c in self.children)})"
        )
        return hashlib.blake2b(text.encode(), digest_size=16).hexdigest()

    def walk(self) -> Iterator["PhysicalOp"]:
        yield self
        for child in self.children:
            yield from child.walk()

    @property
    def is_ai(self) -> bool:
        return self.impl in AI_IMPLS
