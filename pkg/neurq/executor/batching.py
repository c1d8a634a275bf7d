"""Dynamic batching of AI items into micro-batches.

Two policies:
- FixedPolicy: FIFO; emits when B items wait or the oldest is W ms old.
- BucketPolicy: items binned by input length; a bucket emits at B or on
  window expiry, and an expired underfull bucket pulls items from its
  neighbours (nearest bucket first). Every ``merge_period`` the boundaries
  are recomputed as quantiles of the observed lengths, which splits busy
  ranges and merges idle ones.
"""

import itertools
from abc import ABC, abstractmethod
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass
from typing import Any, Hashable, Iterable, Iterator, Optional

import numpy as np
import structlog

from neurq.config.types import BatchPolicyConfig
from neurq.runtime.costs import padding

logger = structlog.get_logger(__name__)

_OBSERVED = 4096
_EPS = 1e-9


@dataclass(frozen=True)
class BatchItem:
    """One row waiting for inference."""

    query: int
    node: int
    index: int  # position in the node's input
    key: Any
    payload: tuple
    length: int
    arrival: float
    snapshot: Optional[int] = None
    tenant: str = "default"
    model: Hashable = None


@dataclass
class MicroBatch:
    id: int
    items: tuple[BatchItem, ...]
    engine: Optional[str] = None
    attempts: int = 0

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("a micro-batch needs at least one item")

    @property
    def model(self) -> Hashable:
        return self.items[0].model

    @property
    def snapshot(self) -> Optional[int]:
        return self.items[0].snapshot

    @property
    def tenant(self) -> str:
        tenants = {i.tenant for i in self.items}
        return self.items[0].tenant if len(tenants) == 1 else "*"

    @property
    def lengths(self) -> list[int]:
        return [i.length for i in self.items]

    @property
    def tokens(self) -> int:
        return sum(self.lengths)

    @property
    def padding(self) -> int:
        return padding(self.lengths)

    def split(self, next_id: int) -> tuple["MicroBatch", "MicroBatch"]:
        half = len(self.items) // 2
        return (
            MicroBatch(self.id, self.items[:half], self.engine, self.attempts),
            MicroBatch(next_id, self.items[half:], self.engine, self.attempts),
        )


class BatchPolicy(ABC):
    """Stateful batcher for one group of compatible items."""

    def __init__(self, max_items: int, window: float, ids: Optional[Iterator[int]] = None):
        if max_items < 1:
            raise ValueError("max_items must be >= 1")
        if window <= 0:
            raise ValueError("window must be > 0")
        self.max_items = max_items
        self.window = window
        self.ids = ids if ids is not None else itertools.count()

    @abstractmethod
    def add(self, item: BatchItem) -> None:
        pass

    @abstractmethod
    def poll(self, now: float, drain: bool = False) -> list[MicroBatch]:
        """Batches ready at ``now``; ``drain`` empties the policy."""
        pass

    @abstractmethod
    def oldest(self) -> Optional[float]:
        pass

    @abstractmethod
    def __len__(self) -> int:
        pass

    def next_deadline(self) -> Optional[float]:
        oldest = self.oldest()
        return None if oldest is None else oldest + self.window

    def _batch(self, items: Iterable[BatchItem]) -> MicroBatch:
        return MicroBatch(next(self.ids), tuple(items))


class FixedPolicy(BatchPolicy):
    def __init__(self, max_items: int, window: float, ids: Optional[Iterator[int]] = None):
        super().__init__(max_items, window, ids)
        self.queue: deque[BatchItem] = deque()

    def add(self, item: BatchItem) -> None:
        self.queue.append(item)

    def oldest(self) -> Optional[float]:
        return self.queue[0].arrival if self.queue else None

    def __len__(self) -> int:
        return len(self.queue)

    def poll(self, now: float, drain: bool = False) -> list[MicroBatch]:
        out = []
        while len(self.queue) >= self.max_items:
            out.append(self._batch(self.queue.popleft() for _ in range(self.max_items)))
        if self.queue and (drain or now - self.queue[0].arrival >= self.window - _EPS):
            out.append(self._batch(self.queue))
            self.queue.clear()
        return out


class BucketPolicy(BatchPolicy):
    """Length-aware buckets: bucket ``i`` holds lengths in (b[i-1], b[i]]."""

    def __init__(
        self,
        max_items: int,
        window: float,
        boundaries: Iterable[int],
        merge_period: float = 1000.0,
        ids: Optional[Iterator[int]] = None,
    ):
        super().__init__(max_items, window, ids)
        self.boundaries = list(boundaries)
        if any(a >= b for a, b in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("bucket boundaries must be strictly ascending")
        self.splits = len(self.boundaries)
        self.merge_period = merge_period
        self.buckets: list[deque[BatchItem]] = [deque() for _ in range(len(self.boundaries) + 1)]
        self.observed: deque[int] = deque(maxlen=_OBSERVED)
        self.last_merge = 0.0

    def bucket_of(self, length: int) -> int:
        return bisect_left(self.boundaries, length)

    def add(self, item: BatchItem) -> None:
        self.buckets[self.bucket_of(item.length)].append(item)
        self.observed.append(item.length)

    def oldest(self) -> Optional[float]:
        heads = [b[0].arrival for b in self.buckets if b]
        return min(heads) if heads else None

    def __len__(self) -> int:
        return sum(len(b) for b in self.buckets)

    def poll(self, now: float, drain: bool = False) -> list[MicroBatch]:
        if now - self.last_merge >= self.merge_period:
            self.rebucket(now)
        out = []
        for bucket in self.buckets:
            while len(bucket) >= self.max_items:
                out.append(self._batch(bucket.popleft() for _ in range(self.max_items)))
        for i, bucket in enumerate(self.buckets):
            if bucket and (drain or now - bucket[0].arrival >= self.window - _EPS):
                items = list(bucket)
                bucket.clear()
                for j in self._neighbours(i):
                    donor = self.buckets[j]
                    while donor and len(items) < self.max_items:
                        items.append(donor.popleft())
                out.append(self._batch(items))
        return out

    def _neighbours(self, i: int) -> list[int]:
        """Other buckets, nearest first, lower first on ties."""
        return sorted((j for j in range(len(self.buckets)) if j != i), key=lambda j: (abs(j - i), j))

    def rebucket(self, now: float) -> None:
        """Recompute boundaries as quantiles of observed lengths and re-bin."""
        self.last_merge = now
        if not self.observed or not self.splits:
            return
        qs = [k / (self.splits + 1) for k in range(1, self.splits + 1)]
        bounds = sorted({int(v) for v in np.quantile(np.array(self.observed), qs, method="lower")})
        if bounds == self.boundaries:
            return
        waiting = sorted((item for b in self.buckets for item in b), key=lambda it: (it.arrival, it.query, it.node, it.index))
        self.boundaries = bounds
        self.buckets = [deque() for _ in range(len(bounds) + 1)]
        for item in waiting:
            self.buckets[self.bucket_of(item.length)].append(item)
        logger.debug("buckets_recomputed", boundaries=bounds)


def make_policy(config: BatchPolicyConfig, ids: Optional[Iterator[int]] = None) -> BatchPolicy:
    if config.kind == "bucket":
        return BucketPolicy(config.max_items, config.window_ms, config.boundaries, config.merge_period_ms, ids)
    return FixedPolicy(config.max_items, config.window_ms, ids)


def form_batches(
    items: Iterable[BatchItem],
    policy: BatchPolicy,
    now: float,
    drain: bool = False,
) -> list[MicroBatch]:
    """Queue ``items`` on ``policy`` and return the batches ready at ``now``."""
    for item in items:
        policy.add(item)
    return policy.poll(now, drain)
