"""Concurrent execution: merged DAG, dynamic batching, engines and the event loop."""

from neurq.executor.coordinator import Executor, QueryHandle
from neurq.executor.metrics import Metrics, QueryRecord, write_csv
from neurq.executor.operators import ReferenceInterpreter

__all__ = [
    "Executor",
    "Metrics",
    "QueryHandle",
    "QueryRecord",
    "ReferenceInterpreter",
    "write_csv",
]
