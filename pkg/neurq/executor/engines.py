"""Logical AI engines: budgets, residency, dispatch and rebalancing.

An engine runs one micro-batch at a time. While a batch runs its tokens
count against the token budget; resident weights and state blocks count
against the memory budget. Memory is fungible (no fragmentation model).
"""

from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional

import structlog

from neurq.errors import EngineOverloaded
from neurq.executor.batching import MicroBatch

logger = structlog.get_logger(__name__)


@dataclass
class EngineState:
    """One engine.

    Attributes:
        id: Engine id (``e0``, ``e1``, ...)
        token_budget: Max tokens of the running batch
        memory_budget: Simulated MB for weights plus state
        resident: Model id -> weight MB, least recently used first
        load: Tokens in flight
        state_blocks: Owner (AI node id) -> MB of held state
        transient: State MB of the running batch
        queue: Batches waiting for this engine
        running: Batch in progress
        busy_until: Virtual time the running batch ends
    """

    id: str
    token_budget: int
    memory_budget: float
    resident: OrderedDict = field(default_factory=OrderedDict)
    load: int = 0
    state_blocks: dict[int, float] = field(default_factory=dict)
    transient: float = 0.0
    queue: deque = field(default_factory=deque)
    running: Optional[MicroBatch] = None
    busy_until: float = 0.0
    peak_memory: float = 0.0
    busy_time: float = 0.0
    batches: int = 0

    @property
    def memory_used(self) -> float:
        return sum(self.resident.values()) + sum(self.state_blocks.values()) + self.transient

    @property
    def queued_tokens(self) -> int:
        return sum(b.tokens for b in self.queue)

    @property
    def pressure(self) -> float:
        """Demand (in-flight plus queued tokens) over the token budget."""
        return (self.load + self.queued_tokens) / self.token_budget

    @property
    def memory_pressure(self) -> float:
        return self.memory_used / self.memory_budget

    def is_resident(self, model: Hashable) -> bool:
        return model in self.resident

    def touch(self, model: Hashable) -> None:
        self.resident.move_to_end(model)

    def within_budgets(self) -> bool:
        return self.load <= self.token_budget and self.memory_used <= self.memory_budget + 1e-9


@dataclass
class Dispatch:
    """Admitted batch on an engine."""

    engine: str
    batch: MicroBatch
    load_needed: bool
    evicted: list[Hashable] = field(default_factory=list)


def dispatch(
    engine: EngineState,
    batch: MicroBatch,
    model: Hashable,
    weight_size: float,
    state_size: float,
) -> Dispatch:
    """Admit ``batch`` to ``engine`` against its budgets.

    Loads the weights if they are not resident, evicting idle resident
    weights (least recently used first) when memory is short.

    Raises:
        EngineOverloaded: if the batch cannot fit in the token or memory budget
    """
    if engine.running is not None:
        raise EngineOverloaded(engine.id, "engine is busy")
    if batch.tokens > engine.token_budget:
        raise EngineOverloaded(engine.id, f"{batch.tokens} tokens exceed budget {engine.token_budget}")
    load_needed = not engine.is_resident(model)
    need = (weight_size if load_needed else 0.0) + state_size
    evicted = []
    free = engine.memory_budget - engine.memory_used
    for other, size in engine.resident.items():
        if need <= free:
            break
        if other != model:
            evicted.append(other)
            free += size
    if need > free:
        raise EngineOverloaded(engine.id, f"{need:.1f}MB does not fit the memory budget")
    for other in evicted:
        engine.resident.pop(other)
    if load_needed:
        engine.resident[model] = weight_size
    engine.touch(model)
    engine.load += batch.tokens
    engine.transient = state_size
    engine.running = batch
    batch.engine = engine.id
    engine.batches += 1
    engine.peak_memory = max(engine.peak_memory, engine.memory_used)
    return Dispatch(engine.id, batch, load_needed, evicted)


def release(engine: EngineState, holds: Optional[Mapping[int, float]] = None) -> MicroBatch:
    """Finish the running batch; ``holds`` keeps owner -> MB of its state on the engine."""
    batch = engine.running
    if batch is None:
        raise EngineOverloaded(engine.id, "no running batch to release")
    engine.load -= batch.tokens
    engine.transient = 0.0
    engine.running = None
    for owner, size in (holds or {}).items():
        engine.state_blocks[owner] = engine.state_blocks.get(owner, 0.0) + size
    if holds:
        engine.peak_memory = max(engine.peak_memory, engine.memory_used)
    return batch


@dataclass(frozen=True)
class Migration:
    kind: str  # batch | state
    source: str
    target: str
    item: int  # batch id or state owner
    size: float  # tokens or MB
    delay: float = 0.0  # transfer latency charged to the owner


@dataclass
class RebalanceReport:
    actions: list[Migration] = field(default_factory=list)
    no_capacity: bool = False


def rebalance(
    engines: list[EngineState],
    threshold: float,
    gap: float,
    transfer_cost: float = 0.0,
) -> RebalanceReport:
    """Move work off engines above ``threshold`` onto engines below ``threshold - gap``.

    Queued batches move first (tail of the busiest queue to the least
    loaded engine); then held state blocks move by memory pressure, each
    charging ``size * transfer_cost`` ms to its owner. When an engine is
    overloaded and no engine has headroom the report flags no_capacity.
    """
    report = RebalanceReport()
    if len(engines) < 2:
        report.no_capacity = any(e.pressure > threshold for e in engines)
        return report
    low = threshold - gap
    order = {e.id: i for i, e in enumerate(engines)}

    while True:
        hot = max(engines, key=lambda e: (e.pressure, -order[e.id]))
        if hot.pressure <= threshold:
            break
        cold = min(engines, key=lambda e: (e.pressure, order[e.id]))
        if cold is hot or cold.pressure >= low:
            report.no_capacity = True
            break
        moved = False
        for batch in reversed(hot.queue):
            if (cold.load + cold.queued_tokens + batch.tokens) / cold.token_budget <= threshold:
                hot.queue.remove(batch)
                batch.engine = cold.id
                cold.queue.append(batch)
                report.actions.append(Migration("batch", hot.id, cold.id, batch.id, batch.tokens))
                moved = True
                break
        if not moved:
            break

    while True:
        hot = max(engines, key=lambda e: (e.memory_pressure, -order[e.id]))
        if hot.memory_pressure <= threshold or not hot.state_blocks:
            break
        cold = min(engines, key=lambda e: (e.memory_pressure, order[e.id]))
        if cold is hot or cold.memory_pressure >= low:
            report.no_capacity = True
            break
        owner, size = max(hot.state_blocks.items(), key=lambda kv: (kv[1], -kv[0]))
        if cold.memory_used + size > cold.memory_budget * threshold:
            break
        del hot.state_blocks[owner]
        cold.state_blocks[owner] = cold.state_blocks.get(owner, 0.0) + size
        cold.peak_memory = max(cold.peak_memory, cold.memory_used)
        report.actions.append(Migration("state", hot.id, cold.id, owner, size, size * transfer_cost))

    if report.actions:
        logger.debug("rebalanced", actions=len(report.actions), no_capacity=report.no_capacity)
    return report
