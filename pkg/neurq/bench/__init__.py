"""Benchmark workloads and the virtual-time benchmark runner."""

from neurq.bench.runner import MODES, BenchConfig, BenchReport, BenchRun, parse_sweep, run_bench, sweep
from neurq.bench.workloads import Workload, gen_workload_r, gen_workload_t

__all__ = [
    "MODES",
    "BenchConfig",
    "BenchReport",
    "BenchRun",
    "Workload",
    "gen_workload_r",
    "gen_workload_t",
    "parse_sweep",
    "run_bench",
    "sweep",
]
