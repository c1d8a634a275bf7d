"""Merged execution DAG over all admitted plans.

Nodes are keyed by the pinned logical fingerprint of their subplan (plus
the pipeline variant for AI nodes). With sharing enabled a second plan
containing the same subplan attaches to the existing node instead of
adding a copy, so the subplan runs once and fans out to every consumer.
Only nodes with a consumer still in flight are shared; finished work is
reused across runs through the cache.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterator, Optional

from neurq.catalog import RowSet
from neurq.optimizer.physical import CACHE_READ, PhysicalOp

PENDING, RUNNING, DONE, FAILED = "pending", "running", "done", "failed"


@dataclass(eq=False)
class ExecNode:
    """One operator instance in the merged graph.

    Attributes:
        id: Dense id in creation order
        op: Physical operator (a representative if shared)
        key: Sharing key
        children: Input nodes
        parents: Nodes reading this one
        consumers: Query ids whose plans contain this node
        live: Consumers still in flight; the node is shareable while any remain
        exec_count: Times the operator ran
        result: Output rows once done
        model: Trained weights (Train nodes)
        cached: Cache value found at merge time (CacheRead nodes)
    """

    id: int
    op: PhysicalOp
    key: Hashable
    children: list["ExecNode"] = field(default_factory=list)
    parents: list["ExecNode"] = field(default_factory=list)
    consumers: list[int] = field(default_factory=list)
    live: set[int] = field(default_factory=set)
    state: str = PENDING
    exec_count: int = 0
    result: Optional[RowSet] = None
    model: Any = None
    cached: Any = None
    error: Optional[Exception] = None
    admission: int = 0
    delay: float = 0.0  # transfer latency charged on completion
    started: Optional[float] = None
    finished: Optional[float] = None

    @property
    def impl(self) -> str:
        return self.op.impl

    @property
    def fan_out(self) -> int:
        return len(self.consumers)

    @property
    def ready(self) -> bool:
        return self.state == PENDING and all(c.state == DONE for c in self.children)

    @property
    def label(self) -> str:
        return f"#{self.id} {self.impl} {self.op.logical.label}"


class ExecGraph:
    """Shared-node table plus the nodes themselves."""

    def __init__(self) -> None:
        self.nodes: list[ExecNode] = []
        self.shared: dict[Hashable, ExecNode] = {}
        self.cse_hits = 0

    def __iter__(self) -> Iterator[ExecNode]:
        return iter(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def merge(
        self,
        plan: PhysicalOp,
        query: int,
        admission: int,
        share: bool = True,
        salt: Hashable = None,
        resolve: Optional[Callable[[PhysicalOp], tuple[PhysicalOp, Any]]] = None,
    ) -> tuple[ExecNode, list[ExecNode]]:
        """Add ``plan`` for ``query``; returns (root, newly created nodes).

        Args:
            plan: Physical plan
            query: Consumer query id
            admission: Admission sequence of the query (event tie-break)
            share: Attach to existing nodes with the same key
            salt: Extra key component (tenant or query) restricting sharing
            resolve: Maps a CacheRead leaf to (operator to run, cached value);
                a miss returns the replaced subplan and None
        """
        created: list[ExecNode] = []

        def visit(op: PhysicalOp) -> ExecNode:
            cached = None
            if op.impl == CACHE_READ and resolve is not None:
                op, cached = resolve(op)
            key = self.key_of(op, salt if share else (salt, query))
            node = self.shared.get(key)
            if node is not None and node.live:
                self.cse_hits += 1
                self._add_consumer(node, query)
                return node
            node = ExecNode(
                len(self.nodes), op, key, consumers=[query], live={query}, cached=cached, admission=admission
            )
            self.nodes.append(node)
            self.shared[key] = node
            created.append(node)
            for child_op in op.children:
                child = visit(child_op)
                node.children.append(child)
                child.parents.append(node)
            return node

        root = visit(plan)
        return root, created

    @staticmethod
    def key_of(op: PhysicalOp, salt: Hashable) -> Hashable:
        base = op.logical_fingerprint
        if op.impl == CACHE_READ:
            return ("cache", op.cache_key, salt)
        if op.impl == "AIInfer":
            return (base, op.variant, salt)
        if op.cached_weights is not None:
            return (base, "cached", salt)
        return (base, salt)

    def _add_consumer(self, node: ExecNode, query: int) -> None:
        if query not in node.consumers:
            node.consumers.append(query)
        node.live.add(query)
        for child in node.children:
            self._add_consumer(child, query)

    def release(self, root: ExecNode, query: int) -> int:
        """Drop ``query`` from the live consumers under ``root``.

        Nodes left without live consumers stop being shareable; a later
        plan with the same subplan gets a fresh node (or a CacheRead).
        Returns the number of nodes retired from the shared table.
        """
        retired = 0
        stack, seen = [root], set()
        while stack:
            node = stack.pop()
            if node.id in seen:
                continue
            seen.add(node.id)
            node.live.discard(query)
            if not node.live and self.shared.get(node.key) is node:
                del self.shared[node.key]
                retired += 1
            stack.extend(node.children)
        return retired

    def shared_nodes(self) -> list[ExecNode]:
        return [n for n in self.nodes if n.fan_out > 1]

    def pending(self) -> list[ExecNode]:
        return [n for n in self.nodes if n.state in (PENDING, RUNNING)]
