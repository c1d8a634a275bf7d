"""Coordinator: admission, the merged graph and the event loop.

One coordinator owns the ExecGraph and the event queue. Relational
operators run on the coordinator (unbounded CPU parallelism) and take
their simulated cost over actual row counts; AI nodes turn their input
rows into items that are batched per (model, snapshot, variant) group and
dispatched to engines, which run one batch at a time.

In virtual time the run is a pure function of (workload, config, seed).
Real time replays the same schedule with scaled wall-clock sleeps and
computes batch outputs on a worker pool.
"""

import asyncio
import itertools
import threading
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any, Hashable, Optional

import numpy as np
import structlog

from neurq.cache import CacheKey, CacheKind, CacheManager
from neurq.catalog import Catalog, RowSet
from neurq.errors import (
    AdmissionRejected,
    DeadlockError,
    EngineFault,
    EngineOverloaded,
    ExecutionError,
    NeurqError,
    TooLarge,
)
from neurq.executor.batching import BatchItem, BatchPolicy, MicroBatch, form_batches, make_policy
from neurq.executor.clock import Event, EventQueue, ScaledClock, VirtualClock
from neurq.executor.engines import EngineState, dispatch, rebalance, release
from neurq.executor.graph import DONE, FAILED, PENDING, RUNNING, ExecGraph, ExecNode
from neurq.executor.metrics import Metrics, QueryRecord
from neurq.executor.operators import (
    infer_inputs,
    infer_output,
    run_relational,
    simulated_cost,
    train_inputs,
)
from neurq.optimizer.physical import ANY_ENGINE, CACHE_READ, Objective, PhysicalOp
from neurq.optimizer.substitute import entry_key, relational_size
from neurq.planner.logical import AIInfer, AITrain, plan_snapshot
from neurq.runtime import costs
from neurq.runtime.backends import ModelRuntime
from neurq.runtime.costs import CostProfile
from neurq.runtime.ridge import RidgeModel

if TYPE_CHECKING:
    from neurq.config.types import NeurqConfig

logger = structlog.get_logger(__name__)

GENERATIVE = "generative_mock"


class QueryHandle:
    """Result of one submitted query; safe to wait on or await from any thread."""

    def __init__(self, query_id: int, tenant: str, snapshot: int, models: list[tuple[str, int]]):
        self.id = query_id
        self.tenant = tenant
        self.snapshot = snapshot
        self.models = models
        self._future: Future = Future()

    @property
    def lineage(self) -> dict[str, Any]:
        """Snapshot and model versions the result was computed at."""
        return {"snapshot": self.snapshot, "models": [f"{n}@{v}" for n, v in self.models]}

    def done(self) -> bool:
        return self._future.done()

    def result(self, timeout: Optional[float] = None) -> RowSet:
        return self._future.result(timeout)

    def exception(self, timeout: Optional[float] = None) -> Optional[BaseException]:
        return self._future.exception(timeout)

    def __await__(self):
        return asyncio.wrap_future(self._future).__await__()

    def _resolve(self, rows: RowSet) -> None:
        if not self._future.done():
            self._future.set_result(rows)

    def _fail(self, exc: BaseException) -> None:
        if not self._future.done():
            self._future.set_exception(exc)


@dataclass
class _Query:
    id: int
    tenant: str
    plan: PhysicalOp
    admission: int
    snapshot: int
    handle: QueryHandle
    record: QueryRecord
    objective: Optional[Objective] = None
    root: Optional[ExecNode] = None
    scheduled: bool = False


@dataclass
class _Group:
    """Items that may share a micro-batch."""

    key: Hashable
    kind: str
    variant: str
    profile: CostProfile
    policy: BatchPolicy
    resident_id: Hashable  # residency key on engines
    weights: Optional[CacheKey] = None
    model: Any = None  # what batches run; the first stage for staged groups
    pipeline: Any = None
    producers: int = 0  # AI nodes that have not enqueued their items yet
    deadline: Optional[float] = None


@dataclass
class _AIState:
    node: ExecNode
    rows: RowSet
    keys: list
    predictions: list
    remaining: int


@dataclass
class _Running:
    batch: MicroBatch
    outputs: Any  # list or Future
    duration: float


@dataclass
class _Counters:
    batches: int = 0
    items: int = 0
    tokens: int = 0
    padding_tokens: int = 0
    migrations: int = 0
    no_capacity: int = 0
    faults: int = 0
    splits: int = 0


class Executor:
    """Concurrent plan execution over a pool of logical engines.

    Args:
        config: Settings (executor, batch_policy, costs)
        catalog: Storage read at each query's pinned snapshot
        runtime: Model backends
        cache: Optional cache for CacheRead leaves, weights and materialization
    """

    def __init__(
        self,
        config: "NeurqConfig",
        catalog: Catalog,
        runtime: ModelRuntime,
        cache: Optional[CacheManager] = None,
    ):
        self.config = config
        self.options = config.executor
        self.catalog = catalog
        self.runtime = runtime
        self.cache = cache
        if self.options.mode == "real_time":
            self.clock: VirtualClock = ScaledClock(self.options.real_time_scale)
            self._pool: Optional[ThreadPoolExecutor] = ThreadPoolExecutor(
                max_workers=self.options.engines, thread_name_prefix="neurq-engine"
            )
        else:
            self.clock = VirtualClock()
            self._pool = None
        if cache is not None:
            cache.clock = self.clock.now
        self.events = EventQueue()
        self.engines = [
            EngineState(e, self.options.token_budget, self.options.memory_budget_mb)
            for e in self.options.engine_ids()
        ]
        self._engines = {e.id: e for e in self.engines}
        self._running: dict[str, _Running] = {}
        self._query_ids = itertools.count()
        self._batch_ids = itertools.count()
        self._rng = np.random.default_rng(config.seed)
        self._lock = threading.RLock()
        self._link_free = 0.0
        # residency key -> ModelWeights cache key, for catalog models; outlives runs
        self._weights: dict[Hashable, CacheKey] = {}
        self._epoch = 0
        self._reset_run()

    def _reset_run(self) -> None:
        """Per-run state: queries, the merged graph, batch groups and counters."""
        self.graph = ExecGraph()
        self.queries: dict[int, _Query] = {}
        self.groups: dict[Hashable, _Group] = {}
        self._node_group: dict[int, Hashable] = {}
        self._ai: dict[int, _AIState] = {}
        self._batch_group: dict[int, Hashable] = {}
        self._batch_cost: dict[int, float] = {}
        self._inflight: dict[str, int] = {}
        self._backlog: dict[str, deque] = {}
        self._tenant_order: list[str] = []
        self._tenant_cursor = 0
        self.counters = _Counters()
        self._epoch += 1
        for engine in self.engines:
            engine.state_blocks.clear()
            engine.peak_memory = engine.memory_used
            engine.busy_time = 0.0

    def _retire_run(self) -> None:
        logger.debug("run_retired", queries=len(self.queries), nodes=len(self.graph))
        self._reset_run()

    def _idle(self) -> bool:
        return not self.events and not self._running and all(q.handle.done() for q in self.queries.values())

    # -- admission --

    def submit(
        self,
        plan: PhysicalOp,
        tenant: str = "default",
        objective: Optional[Objective] = None,
        at: Optional[float] = None,
    ) -> QueryHandle:
        """Admit a physical plan.

        Args:
            plan: Pinned physical plan
            tenant: Tenant the query runs for
            objective: Objective it was optimized under (kept for reporting)
            at: Virtual arrival time (default: now)

        Raises:
            AdmissionRejected: if ``queue_depth`` queries are already waiting
            ExecutionError: if the plan places work on an unknown engine
        """
        for op in plan.walk():
            if op.engine != ANY_ENGINE and op.engine not in self._engines:
                raise ExecutionError(f"plan places {op.impl} on unknown engine '{op.engine}'")
        with self._lock:
            if self.queries and self._idle():
                self._retire_run()
            active = sum(1 for q in self.queries.values() if not q.handle.done())
            if active >= self.options.queue_depth:
                raise AdmissionRejected(self.options.queue_depth)
            qid = next(self._query_ids)
            snapshot = plan_snapshot(plan.logical)
            snapshot = self.catalog.version if snapshot is None else snapshot
            models = sorted({
                (op.logical.binding.name, op.logical.binding.version)
                for op in plan.walk()
                if isinstance(op.logical, AIInfer) and op.logical.binding is not None
            })
            handle = QueryHandle(qid, tenant, snapshot, models)
            arrival = self.clock.now() if at is None else at
            query = _Query(qid, tenant, plan, qid + 1, snapshot, handle, QueryRecord(qid, tenant, arrival), objective)
            self.queries[qid] = query
            if tenant not in self._tenant_order:
                self._tenant_order.append(tenant)
            if self.options.tenant_sequential:
                self._advance_tenants()
            else:
                self._schedule_admit(query)
        logger.debug("query_submitted", query=qid, tenant=tenant, snapshot=snapshot)
        return handle

    def _schedule_admit(self, query: _Query) -> None:
        query.scheduled = True
        at = max(query.record.submitted, self.clock.now())
        self.events.push(at, "admit", query.id, admission=query.admission)

    def _advance_tenants(self) -> None:
        """Tenant-sequential mode: admit a tenant once every earlier tenant drained."""
        while self._tenant_cursor < len(self._tenant_order):
            tenant = self._tenant_order[self._tenant_cursor]
            mine = [q for q in self.queries.values() if q.tenant == tenant]
            for query in mine:
                if not query.scheduled:
                    self._schedule_admit(query)
            if any(not q.handle.done() for q in mine):
                return
            self._tenant_cursor += 1

    def _on_admit(self, qid: int) -> None:
        query = self.queries[qid]
        now = self.clock.now()
        query.record.admitted = now
        root, created = self.graph.merge(
            query.plan, query.id, query.admission, share=self.options.cse, resolve=self._resolve_cache
        )
        query.root = root
        for node in created:
            if isinstance(node.op.logical, AIInfer) and node.impl == "AIInfer":
                self._register_producer(node, query)
        for node in created:
            failed = next((c for c in node.children if c.state == FAILED), None)
            if failed is not None:
                self._fail_node(node, failed.error)
            elif node.ready:
                self._push(now, "start", node)
        if root.state == DONE:
            self._complete(query)
        elif root.state == FAILED:
            self._fail_query(query, root.error)

    def _resolve_cache(self, op: PhysicalOp) -> tuple[PhysicalOp, Any]:
        """Re-validate a CacheRead leaf; a miss runs the replaced subplan."""
        hit = self.cache.get(op.cache_key) if self.cache is not None and op.cache_key else None
        if hit is None:
            logger.debug("cache_read_fallback", key=op.cache_key.fingerprint[:8] if op.cache_key else None)
            return op.replaced, None
        return replace(op, cost=hit.latency), hit.entry.value

    # -- groups --

    def _register_producer(self, node: ExecNode, query: _Query) -> None:
        logical: AIInfer = node.op.logical
        scoped = self.options.tenant_isolation or not self.options.shared_model
        if logical.binding is not None:
            model: Hashable = ("bound", logical.binding.name, logical.binding.version, logical.binding.mask)
            resident: Hashable = (logical.binding.name, logical.binding.version)
            weights = CacheKey(CacheKind.MODEL_WEIGHTS, f"{logical.binding.name}@{logical.binding.version}",
                               None, (logical.binding.name, logical.binding.version))
            self._weights[resident] = weights
        else:
            model = ("trained", self._epoch, self._train_node(node).id)
            resident, weights = model, None
        if not self.options.shared_model:
            resident = (resident, query.tenant)
            weights = None
        key = (model, logical.snapshot, node.op.variant, query.tenant if scoped else None)
        group = self.groups.get(key)
        if group is None:
            group = _Group(
                key, logical.kind, node.op.variant,
                self.config.models.profile_for(logical.kind),
                make_policy(self.config.batch_policy, self._batch_ids),
                resident, weights,
            )
            self.groups[key] = group
        group.producers += 1
        self._node_group[node.id] = key

    @staticmethod
    def _train_node(node: ExecNode) -> ExecNode:
        stack = list(node.children)
        while stack:
            below = stack.pop(0)
            if isinstance(below.op.logical, AITrain):
                return below
            stack.extend(below.children)
        raise ExecutionError("AIInfer without a model binding has no AITrain input")

    # -- node lifecycle --

    def _push(self, at: float, kind: str, node: ExecNode) -> Event:
        return self.events.push(at, kind, node, admission=node.admission, node=node.id)

    def _snapshot_of(self, node: ExecNode) -> int:
        return self.queries[node.consumers[0]].snapshot

    def _on_start(self, node: ExecNode) -> None:
        if node.state != PENDING:
            return
        now = self.clock.now()
        node.state = RUNNING
        node.started = now
        op, logical = node.op, node.op.logical
        inputs = [c.result for c in node.children]
        try:
            if op.impl == CACHE_READ:
                result, duration = node.cached, op.cost
            elif isinstance(logical, AITrain):
                result, duration = inputs[0], self._train(node, inputs[0])
            elif isinstance(logical, AIInfer):
                self._start_ai(node, inputs[0])
                return
            else:
                snapshot = self._snapshot_of(node)
                result = run_relational(self.catalog, logical, inputs, snapshot, op.impl)
                duration = simulated_cost(self.config.db_costs, self.catalog, op.impl, logical, inputs, snapshot)
        except NeurqError as exc:
            self._fail_node(node, exc)
            return
        node.result = result
        self._push(now + duration, "finish", node)

    def _train(self, node: ExecNode, rows: RowSet) -> float:
        logical: AITrain = node.op.logical
        if node.op.cached_weights is not None and self.cache is not None:
            hit = self.cache.get(node.op.cached_weights)
            if hit is not None and isinstance(hit.entry.value, RidgeModel):
                node.model = hit.entry.value
                return hit.latency
        features, target = train_inputs(rows, logical)
        node.model = self.runtime.train(logical.features, features, target)
        return costs.train_cost(self.config.models.profile_for(logical.kind), len(rows))

    def _start_ai(self, node: ExecNode, rows: RowSet) -> None:
        now = self.clock.now()
        logical: AIInfer = node.op.logical
        group = self.groups[self._node_group[node.id]]
        if group.model is None:
            if logical.binding is None:
                model = self._train_node(node).model
            else:
                record = self.catalog.get_model(logical.binding.name, logical.binding.version)
                model = self.runtime.slice_for_mask(record, logical.binding.mask)
            group.pipeline = model
            group.model = self.runtime.staged_base(model) if group.variant == "staged" else model
        keys, payloads = infer_inputs(rows, logical)
        lengths = self.runtime.backend(logical.kind).lengths(payloads)
        query = self.queries[node.consumers[0]]
        self._ai[node.id] = _AIState(node, rows, keys, [None] * len(keys), len(keys))
        group.producers -= 1
        items = [
            BatchItem(query.id, node.id, i, keys[i], payloads[i], lengths[i], now,
                      logical.snapshot, query.tenant, group.key[0])
            for i in range(len(keys))
        ]
        if not items:
            self._complete_ai(node)
        self._emit(group, form_batches(items, group.policy, now, drain=group.producers == 0))

    def _emit(self, group: _Group, batches: list[MicroBatch]) -> None:
        for batch in batches:
            self._route(batch, group)
        deadline = group.policy.next_deadline()
        if deadline is not None and deadline != group.deadline:
            group.deadline = deadline
            self.events.push(max(deadline, self.clock.now()), "flush", group.key)
        if batches:
            self._rebalance()

    def _on_flush(self, key: Hashable) -> None:
        group = self.groups[key]
        group.deadline = None
        self._emit(group, group.policy.poll(self.clock.now(), drain=group.producers == 0))

    def _complete_ai(self, node: ExecNode) -> None:
        state = self._ai.pop(node.id)
        predictions = state.predictions
        if node.op.variant == "staged":
            group = self.groups[self._node_group[node.id]]
            predictions = self.runtime.fuse(group.pipeline, predictions, state.keys)
        node.result = infer_output(node.op.logical, state.rows, state.keys, predictions)
        released = False
        for engine in self.engines:
            released = engine.state_blocks.pop(node.id, None) is not None or released
        if released:
            self._kick()
        self._push(self.clock.now() + node.delay, "finish", node)

    def _on_finish(self, node: ExecNode) -> None:
        if node.state != RUNNING:
            return
        now = self.clock.now()
        node.state = DONE
        node.finished = now
        node.exec_count += 1
        for parent in node.parents:
            if parent.ready:
                self._push(now, "start", parent)
        for qid in node.consumers:
            query = self.queries[qid]
            if query.root is node and not query.handle.done():
                self._complete(query)

    def _complete(self, query: _Query) -> None:
        query.record.finished = self.clock.now()
        # a shared join may have been built with its sides swapped
        query.handle._resolve(query.root.result.reorder(query.plan.logical.output))
        self.graph.release(query.root, query.id)
        logger.debug("query_completed", query=query.id, at=query.record.finished)
        if self.options.tenant_sequential:
            self._advance_tenants()

    def _fail_node(self, node: ExecNode, exc: Exception) -> None:
        if node.state in (DONE, FAILED):
            return
        if node.state == PENDING and node.id in self._node_group:
            group = self.groups[self._node_group[node.id]]
            group.producers -= 1
            if group.producers == 0 and len(group.policy):
                self.events.push(self.clock.now(), "flush", group.key)
        node.state = FAILED
        node.error = exc
        self._ai.pop(node.id, None)
        logger.warning("node_failed", node=node.label, error=str(exc))
        for parent in node.parents:
            self._fail_node(parent, exc)
        for qid in node.consumers:
            query = self.queries[qid]
            if query.root is node:
                self._fail_query(query, exc)

    def _fail_query(self, query: _Query, exc: Exception) -> None:
        query.record.error = str(exc)
        query.handle._fail(exc)
        if query.root is not None:
            self.graph.release(query.root, query.id)
        if self.options.tenant_sequential:
            self._advance_tenants()

    # -- batches and engines --

    def _route(self, batch: MicroBatch, group: _Group) -> None:
        self._batch_group[batch.id] = group.key
        self._batch_cost[batch.id] = self._batch_duration(group, batch)
        c = self.counters
        c.batches += 1
        c.items += len(batch.items)
        c.tokens += batch.tokens
        c.padding_tokens += batch.padding
        limit = self.options.max_inflight_per_tenant
        if limit is not None:
            tenant = batch.tenant
            if self._inflight.get(tenant, 0) >= limit:
                self._backlog.setdefault(tenant, deque()).append(batch)
                return
            self._inflight[tenant] = self._inflight.get(tenant, 0) + 1
        self._send(batch)

    def _send(self, batch: MicroBatch) -> None:
        if self.options.export_execute:
            at = max(self.clock.now(), self._link_free) + self.options.export_latency_ms
            self._link_free = at
            self.events.push(at, "exported", batch, admission=self._admission_of(batch), node=batch.items[0].node)
        else:
            self._enqueue(batch)

    def _on_exported(self, batch: MicroBatch) -> None:
        self._enqueue(batch)
        self._rebalance()

    def _admission_of(self, batch: MicroBatch) -> int:
        return min(self.queries[i.query].admission for i in batch.items)

    def _batch_duration(self, group: _Group, batch: MicroBatch) -> float:
        if group.variant == "staged":
            models = self.config.models
            return costs.staged_cost(
                group.profile, batch.lengths, models.relation_modeling, models.fusion
            )
        return costs.batch_cost(group.profile, batch.lengths)

    def _enqueue(self, batch: MicroBatch) -> None:
        group = self.groups[self._batch_group[batch.id]]
        engine = self._place(batch, group)
        batch.engine = engine.id
        engine.queue.append(batch)
        self._try_start(engine)

    def _place(self, batch: MicroBatch, group: _Group) -> EngineState:
        """Placement hint if any, else the engine with the earliest estimated finish."""
        hint = self.graph.nodes[batch.items[0].node].op.engine
        if hint in self._engines:
            return self._engines[hint]
        now = self.clock.now()

        def finish(engine: EngineState) -> tuple[float, int]:
            ready = max(now, engine.busy_until) + sum(self._batch_cost[b.id] for b in engine.queue)
            pending = group.resident_id in engine.resident or any(
                self._batch_group[b.id] == group.key for b in engine.queue
            )
            load = 0.0 if pending else group.profile.load_cost
            return ready + load + self._batch_cost[batch.id], self.engines.index(engine)

        return min(self.engines, key=finish)

    def _try_start(self, engine: EngineState) -> None:
        while engine.running is None and engine.queue:
            batch = engine.queue[0]
            group = self.groups[self._batch_group[batch.id]]
            state = costs.state_size(group.profile, batch.lengths)
            try:
                admitted = dispatch(engine, batch, group.resident_id, group.profile.weight_size, state)
            except EngineOverloaded as exc:
                if not self._on_overload(engine, batch, exc):
                    return
                continue
            engine.queue.popleft()
            self._account_weights(admitted.evicted, group if admitted.load_needed else None)
            duration = self._batch_cost[batch.id] + (group.profile.load_cost if admitted.load_needed else 0.0)
            payloads = [item.payload for item in batch.items]
            backend = self.runtime.backend(group.kind)
            if self._pool is not None:
                outputs: Any = self._pool.submit(backend.predict, group.model, payloads)
            else:
                outputs = backend.predict(group.model, payloads)
            now = self.clock.now()
            engine.busy_until = now + duration
            engine.busy_time += duration
            self._running[engine.id] = _Running(batch, outputs, duration)
            self.events.push(
                now + duration, "batch_done", engine.id,
                admission=self._admission_of(batch), node=batch.items[0].node,
            )

    def _on_overload(self, engine: EngineState, batch: MicroBatch, exc: EngineOverloaded) -> bool:
        """Handle a refused dispatch; True if the engine queue changed and may be retried."""
        if batch.tokens > engine.token_budget:
            engine.queue.popleft()
            if len(batch.items) == 1:
                self._drop_batch(batch, exc)
                return True
            first, second = batch.split(next(self._batch_ids))
            for part in (first, second):
                self._batch_group[part.id] = self._batch_group[batch.id]
                group = self.groups[self._batch_group[part.id]]
                self._batch_cost[part.id] = self._batch_duration(group, part)
            engine.queue.appendleft(second)
            engine.queue.appendleft(first)
            self.counters.splits += 1
            return True
        # memory: try an engine with room, else wait for held state to drain
        group = self.groups[self._batch_group[batch.id]]
        need = group.profile.weight_size + costs.state_size(group.profile, batch.lengths)
        for other in self.engines:
            if other is not engine and other.memory_used + need <= other.memory_budget:
                engine.queue.popleft()
                batch.engine = other.id
                other.queue.append(batch)
                self._try_start(other)
                return True
        if any(e.state_blocks or e.running is not None for e in self.engines):
            return False
        engine.queue.popleft()
        self._drop_batch(batch, exc)
        return True

    def _drop_batch(self, batch: MicroBatch, exc: Exception) -> None:
        self._release_inflight(batch)
        for node_id in dict.fromkeys(item.node for item in batch.items):
            self._fail_node(self.graph.nodes[node_id], exc)

    def _account_weights(self, evicted: list, loaded: Optional[_Group]) -> None:
        """Mirror engine weight residency as pinned ModelWeights cache entries."""
        if self.cache is None:
            return
        for model in evicted:
            weights = self._weights.get(model)
            if weights is not None and not any(model in e.resident for e in self.engines):
                self.cache.invalidate(lambda k, w=weights: k == w)
        if loaded is not None and loaded.weights is not None and loaded.weights not in self.cache:
            try:
                self.cache.put(loaded.weights, max(loaded.profile.weight_size, 1e-6), pinned=True)
            except TooLarge as exc:
                logger.debug("weights_not_cached", error=str(exc))

    def _on_batch_done(self, engine_id: str) -> None:
        engine = self._engines[engine_id]
        running = self._running.pop(engine_id)
        batch = running.batch
        group = self.groups[self._batch_group[batch.id]]
        outputs = running.outputs.result() if isinstance(running.outputs, Future) else running.outputs
        try:
            self._maybe_fault(engine, batch)
        except EngineFault as exc:
            logger.info("batch_requeued", error=str(exc))
            self.counters.faults += 1
            release(engine)
            batch.attempts += 1
            engine.queue.appendleft(batch)
            self._try_start(engine)
            return
        holds = None
        if group.kind == GENERATIVE:
            per_node: dict[int, list[int]] = {}
            for item in batch.items:
                per_node.setdefault(item.node, []).append(item.length)
            holds = {n: costs.state_size(group.profile, lens) for n, lens in per_node.items()}
        release(engine, holds)
        finished = []
        for item, output in zip(batch.items, outputs):
            state = self._ai.get(item.node)
            if state is None:
                continue
            state.predictions[item.index] = output
            state.remaining -= 1
            if state.remaining == 0:
                finished.append(state.node)
        for node in finished:
            self._complete_ai(node)
        self._release_inflight(batch)
        self._kick()
        self._rebalance()

    def _kick(self) -> None:
        """Retry idle engines; freed memory on one engine can unblock another's queue."""
        for engine in self.engines:
            self._try_start(engine)

    def _maybe_fault(self, engine: EngineState, batch: MicroBatch) -> None:
        if self.options.fault_rate > 0 and self._rng.random() < self.options.fault_rate:
            raise EngineFault(engine.id, batch.id)

    def _release_inflight(self, batch: MicroBatch) -> None:
        if self.options.max_inflight_per_tenant is None:
            return
        tenant = batch.tenant
        self._inflight[tenant] = max(0, self._inflight.get(tenant, 0) - 1)
        backlog = self._backlog.get(tenant)
        if backlog:
            self._inflight[tenant] += 1
            self._send(backlog.popleft())

    def _rebalance(self) -> None:
        if len(self.engines) < 2 and not any(e.queue for e in self.engines):
            return
        report = rebalance(
            self.engines, self.options.overload_threshold, self.options.rebalance_gap,
            self.options.transfer_cost_ms_per_mb,
        )
        self.counters.migrations += len(report.actions)
        self.counters.no_capacity += int(report.no_capacity)
        for action in report.actions:
            if action.kind == "state":
                self.graph.nodes[action.item].delay += action.delay
        if report.actions:
            self._kick()

    # -- run --

    def run(self) -> Metrics:
        """Process events until the queue is empty.

        Raises:
            DeadlockError: if admitted queries remain but nothing can run
        """
        while True:
            with self._lock:
                event = self.events.pop()
            if event is None:
                break
            self.clock.advance_to(max(event.time, self.clock.now()))
            with self._lock:
                getattr(self, f"_on_{event.kind}")(event.payload)
        with self._lock:
            stuck = [q for q in self.queries.values() if not q.handle.done()]
            if stuck:
                error = DeadlockError(self.dump())
                for query in stuck:
                    self._fail_query(query, error)
                raise error
            if self.options.materialize:
                self.materialize()
            return self.metrics()

    def materialize(self) -> int:
        """Put Join results, bound inference results and trained weights in the cache."""
        if self.cache is None or not self.cache.config.enabled:
            return 0
        stored = 0
        for node in self.graph:
            if node.state != DONE or node.impl == CACHE_READ:
                continue
            key = entry_key(node.op)
            if key is None or key in self.cache:
                continue
            if isinstance(node.op.logical, AITrain):
                value, size = node.model, node.model.size_mb
            else:
                value = node.result
                size = relational_size(len(value), len(value.columns), self.config)
            try:
                if self.cache.put(key, max(size, 1e-6), value=value).placed:
                    stored += 1
            except TooLarge as exc:
                logger.debug("not_materialized", error=str(exc))
        return stored

    def metrics(self) -> Metrics:
        c = self.counters
        return Metrics.summarize(
            [q.record for q in self.queries.values()],
            batches=c.batches,
            items=c.items,
            tokens=c.tokens,
            padding_tokens=c.padding_tokens,
            cse_hits=self.graph.cse_hits,
            shared_nodes=len(self.graph.shared_nodes()),
            executions=sum(n.exec_count for n in self.graph),
            migrations=c.migrations,
            no_capacity=c.no_capacity,
            faults=c.faults,
            splits=c.splits,
            engine_peak_memory_mb={e.id: round(e.peak_memory, 6) for e in self.engines},
            engine_busy_ms={e.id: round(e.busy_time, 6) for e in self.engines},
            cache=self.cache.report() if self.cache is not None else {},
        )

    def residency(self) -> dict[str, frozenset]:
        """Engine id -> resident (name, version) model keys, for the optimizer."""
        with self._lock:
            return {e.id: frozenset(m for m in e.resident if m in self._weights) for e in self.engines}

    def dump(self) -> str:
        lines = [f"t={self.clock.now():.3f}ms"]
        for node in self.graph.pending():
            waiting = [c.id for c in node.children if c.state != DONE]
            lines.append(f"  {node.label} state={node.state} waiting_on={waiting} consumers={node.consumers}")
        for group in self.groups.values():
            if len(group.policy) or group.producers:
                lines.append(f"  group {group.key} queued={len(group.policy)} producers={group.producers}")
        for engine in self.engines:
            lines.append(
                f"  engine {engine.id} running={engine.running.id if engine.running else None} "
                f"queue={[b.id for b in engine.queue]} memory={engine.memory_used:.1f}MB"
            )
        return "\n".join(lines)

    def shutdown(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
