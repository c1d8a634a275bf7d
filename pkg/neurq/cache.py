"""Unified multi-tier cache for relational intermediates and AI artifacts.

Entries live in exactly one of three tiers (accelerator, host, disk) and
are keyed by (kind, fingerprint, snapshot, model version), so a new data
snapshot or model version can never hit an older entry. Placement keeps the
highest-scoring entries in the fastest tier: a put demotes lower-scoring
unpinned entries tier by tier and evicts from the last tier.

Scores come from a pluggable policy; the default is benefit density,
``access_count * decay^(now - last_access) / size``.
"""

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import TYPE_CHECKING, Any, Callable, Iterator, Mapping, Optional

import structlog

from neurq.config.types import TIER_NAMES, CacheConfig
from neurq.errors import TooLarge

if TYPE_CHECKING:
    from neurq.catalog import Catalog

logger = structlog.get_logger(__name__)


class CacheKind(str, Enum):
    RELATIONAL = "RelationalIntermediate"
    EMBEDDING = "Embedding"
    MODEL_WEIGHTS = "ModelWeights"
    KV_BLOCK = "KVBlock"
    OPTIMIZER_STATE = "OptimizerState"


# kinds whose validity depends on the data snapshot
DATA_KINDS = frozenset({CacheKind.RELATIONAL, CacheKind.EMBEDDING, CacheKind.KV_BLOCK, CacheKind.OPTIMIZER_STATE})


class Tier(str, Enum):
    T0 = "T0_accelerator"
    T1 = "T1_host"
    T2 = "T2_disk"

    @property
    def level(self) -> int:
        return list(Tier).index(self)

    @property
    def config_name(self) -> str:
        return TIER_NAMES[self.level]


@dataclass(frozen=True)
class CacheKey:
    kind: CacheKind
    fingerprint: str
    snapshot: Optional[int] = None
    model: Optional[tuple[str, int]] = None


@dataclass
class CacheEntry:
    key: CacheKey
    size: float  # simulated MB
    tier: Tier
    access_count: int = 1
    last_access: float = 0.0
    pinned: bool = False
    value: Any = field(default=None, compare=False, repr=False)


@dataclass
class PlacementReport:
    key: CacheKey
    tier: Optional[Tier]  # None when the entry could not be placed
    evicted: list[CacheKey] = field(default_factory=list)
    demoted: list[tuple[CacheKey, Tier, Tier]] = field(default_factory=list)

    @property
    def placed(self) -> bool:
        return self.tier is not None


@dataclass(frozen=True)
class CacheHit:
    entry: CacheEntry
    tier: Tier
    latency: float


class ScorePolicy(ABC):
    """Eviction score of an entry; higher means keep."""

    @abstractmethod
    def score(self, entry: CacheEntry, now: float) -> float:
        pass


class BenefitDensity(ScorePolicy):
    def __init__(self, decay: float = 0.99):
        self.decay = decay

    def score(self, entry: CacheEntry, now: float) -> float:
        idle = max(0.0, now - entry.last_access)
        return entry.access_count * self.decay**idle / entry.size


@dataclass
class CacheStats:
    hits: dict[str, int] = field(default_factory=dict)
    misses: dict[str, int] = field(default_factory=dict)
    evictions: int = 0
    demotions: int = 0
    promotions: int = 0
    rejections: int = 0
    invalidations: int = 0

    def count(self, table: dict[str, int], kind: CacheKind) -> None:
        table[kind.value] = table.get(kind.value, 0) + 1


class CacheIndex(Mapping[CacheKey, CacheEntry]):
    """Point-in-time copy of the cache contents."""

    def __init__(self, entries: dict[CacheKey, CacheEntry]):
        self._entries = MappingProxyType(entries)

    def __getitem__(self, key: CacheKey) -> CacheEntry:
        return self._entries[key]

    def __iter__(self) -> Iterator[CacheKey]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def by_fingerprint(self, fingerprint: str) -> list[CacheEntry]:
        return [e for k, e in self._entries.items() if k.fingerprint == fingerprint]


class CacheManager:
    """Thread-safe multi-tier cache.

    Args:
        config: Tier capacities and read costs, decay
        policy: Score policy (default BenefitDensity(config.decay))
        clock: Returns the current (virtual) time in ms
    """

    def __init__(
        self,
        config: CacheConfig,
        policy: Optional[ScorePolicy] = None,
        clock: Optional[Callable[[], float]] = None,
    ):
        self.config = config
        self.policy = policy or BenefitDensity(config.decay)
        self.clock = clock or (lambda: 0.0)
        self._lock = threading.RLock()
        self._entries: dict[CacheKey, CacheEntry] = {}
        self._seq: dict[CacheKey, int] = {}
        self._counter = 0
        self.stats = CacheStats()

    # -- helpers --

    def capacity(self, tier: Tier) -> float:
        return self.config.tiers[tier.config_name].capacity_mb

    def read_cost(self, tier: Tier) -> float:
        return self.config.tiers[tier.config_name].read_cost

    def used(self, tier: Tier) -> float:
        with self._lock:
            return sum(e.size for e in self._entries.values() if e.tier == tier)

    def score(self, entry: CacheEntry, now: Optional[float] = None) -> float:
        return self.policy.score(entry, self.clock() if now is None else now)

    def __contains__(self, key: CacheKey) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[CacheEntry]:
        with self._lock:
            return list(self._entries.values())

    # -- operations --

    def put(
        self,
        key: CacheKey,
        size: float,
        preferred_tier: Tier = Tier.T0,
        value: Any = None,
        pinned: bool = False,
        now: Optional[float] = None,
    ) -> PlacementReport:
        """Place an entry, demoting or evicting lower-scoring ones.

        Raises:
            TooLarge: if ``size`` exceeds the largest tier
        """
        largest = max(self.capacity(t) for t in Tier)
        if size > largest:
            raise TooLarge(size, largest)
        if size <= 0:
            raise ValueError(f"cache entry size must be > 0, got {size}")
        now = self.clock() if now is None else now
        with self._lock:
            old = self._entries.pop(key, None)
            entry = CacheEntry(
                key, size, preferred_tier,
                access_count=old.access_count if old else 1,
                last_access=now, pinned=pinned or bool(old and old.pinned), value=value,
            )
            self._counter += 1
            self._seq[key] = self._counter
            report = PlacementReport(key, None)
            tier = self._place(entry, preferred_tier.level, now, report)
            report.tier = tier
            if tier is None:
                self._seq.pop(key, None)
                self.stats.rejections += 1
        logger.debug("cache_put", kind=key.kind.value, tier=report.tier, size=size,
                     evicted=len(report.evicted), demoted=len(report.demoted))
        return report

    def _place(self, entry: CacheEntry, level: int, now: float, report: PlacementReport) -> Optional[Tier]:
        tiers = list(Tier)
        for lvl in range(level, len(tiers)):
            tier = tiers[lvl]
            free = self.capacity(tier) - self.used(tier)
            victims: list[CacheEntry] = []
            if entry.size > free:
                incoming = self.score(entry, now)
                candidates = sorted(
                    (e for e in self._entries.values()
                     if e.tier == tier and not e.pinned and self.score(e, now) < incoming),
                    key=lambda e: (self.score(e, now), self._seq.get(e.key, 0)),
                )
                for victim in candidates:
                    if entry.size <= free:
                        break
                    victims.append(victim)
                    free += victim.size
                if entry.size > free:
                    continue
            for victim in victims:
                del self._entries[victim.key]
                if lvl + 1 < len(tiers):
                    placed = self._place(victim, lvl + 1, now, report)
                    if placed is not None:
                        report.demoted.append((victim.key, tier, placed))
                        self.stats.demotions += 1
                        continue
                report.evicted.append(victim.key)
                self._seq.pop(victim.key, None)
                self.stats.evictions += 1
            entry.tier = tier
            self._entries[entry.key] = entry
            return tier
        return None

    def get(self, key: CacheKey, now: Optional[float] = None) -> Optional[CacheHit]:
        """Hit with the tier read latency, or None. A T2 hit is promoted to T1 if it fits."""
        now = self.clock() if now is None else now
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                self.stats.count(self.stats.misses, key.kind)
                return None
            tier = entry.tier
            entry.access_count += 1
            entry.last_access = now
            self.stats.count(self.stats.hits, key.kind)
            hit = CacheHit(replace(entry), tier, self.read_cost(tier) * entry.size)
            if tier == Tier.T2 and self.capacity(Tier.T1) - self.used(Tier.T1) >= entry.size:
                entry.tier = Tier.T1
                self.stats.promotions += 1
        return hit

    def invalidate(self, predicate: Callable[[CacheKey], bool]) -> int:
        """Remove every entry whose key matches; atomic with respect to gets."""
        with self._lock:
            doomed = [k for k in self._entries if predicate(k)]
            for key in doomed:
                del self._entries[key]
                self._seq.pop(key, None)
            self.stats.invalidations += len(doomed)
        if doomed:
            logger.debug("cache_invalidated", count=len(doomed))
        return len(doomed)

    def set_pinned(self, key: CacheKey, pinned: bool) -> None:
        with self._lock:
            entry = self._entries.get(key)
            if entry is not None:
                entry.pinned = pinned

    def snapshot_index(self) -> CacheIndex:
        """Consistent copy; later mutations are invisible to it."""
        with self._lock:
            return CacheIndex({k: replace(e) for k, e in self._entries.items()})

    # -- catalog hooks --

    def attach(self, catalog: "Catalog") -> None:
        """Invalidate superseded entries on appends and model changes."""
        catalog.subscribe(self._on_catalog_event)

    def _on_catalog_event(self, event: str, info: dict) -> None:
        if event == "appended":
            version = info["version"]
            self.invalidate(
                lambda k: k.kind in DATA_KINDS and k.snapshot is not None and k.snapshot < version
            )
        elif event == "model_registered":
            name, version = info["name"], info["version"]
            self.invalidate(lambda k: k.model is not None and k.model[0] == name and k.model[1] < version)
        elif event == "model_dropped":
            name = info["name"]
            self.invalidate(lambda k: k.model is not None and k.model[0] == name)

    def report(self) -> dict:
        """Occupancy per tier and hit/miss/eviction counters."""
        with self._lock:
            occupancy = {t.value: round(self.used(t), 6) for t in Tier}
            counts = {t.value: sum(1 for e in self._entries.values() if e.tier == t) for t in Tier}
        s = self.stats
        return {
            "occupancy_mb": occupancy,
            "entries": counts,
            "hits": dict(sorted(s.hits.items())),
            "misses": dict(sorted(s.misses.items())),
            "evictions": s.evictions,
            "demotions": s.demotions,
            "promotions": s.promotions,
            "rejections": s.rejections,
            "invalidations": s.invalidations,
        }
