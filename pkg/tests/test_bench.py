"""Tests for benchmark workloads and the benchmark runner."""

import json

import pytest

from neurq.bench import BenchConfig, gen_workload_r, gen_workload_t, parse_sweep, run_bench, sweep
from neurq.bench.workloads import LONG_WORDS, R_FEATURES, SHORT_WORDS
from neurq.errors import ConfigError

SMALL_R = dict(workload="R", engines=2, rows=200, users=20, queries=4)
SMALL_T = dict(workload="T", engines=2, rows=40, tenants=3)


class TestWorkloads:
    """Tests for the synthetic workload generators."""

    def test_r_shape(self):
        workload = gen_workload_r(200, users=20, queries=4)
        usage_def, usage_rows = workload.tables["usage"]
        assert len(usage_rows) == 200
        assert usage_def.column_names == ("usage_id", *R_FEATURES, "rating")
        assert len(workload.queries) == 4
        assert all("TRAIN ON" in sql for _, sql in workload.queries)

    def test_r_is_seeded(self):
        assert gen_workload_r(200, 20, 4, seed=1).table_hash() == gen_workload_r(200, 20, 4, seed=1).table_hash()
        assert gen_workload_r(200, 20, 4, seed=1).table_hash() != gen_workload_r(200, 20, 4, seed=2).table_hash()

    def test_r_minimum_rows(self):
        with pytest.raises(ValueError):
            gen_workload_r(99)

    def test_t_is_bimodal(self):
        """Every sentence is either short or long."""
        workload = gen_workload_t(50, tenants=2)
        assert workload.tenants == ["tenant0", "tenant1"]
        for _, rows in workload.tables.values():
            for _, body in rows:
                n = len(body.split())
                assert SHORT_WORDS[0] <= n < SHORT_WORDS[1] or LONG_WORDS[0] <= n < LONG_WORDS[1]

    def test_t_needs_a_tenant(self):
        with pytest.raises(ValueError):
            gen_workload_t(10, tenants=0)


class TestBenchConfig:
    def test_validate(self):
        for bad in (dict(workload="X"), dict(mode="nope"), dict(policy="lifo"), dict(engines=0)):
            with pytest.raises(ConfigError):
                BenchConfig(**bad).validate()

    def test_config_id(self):
        assert BenchConfig(workload="T", mode="sequential", engines=2, seed=3).config_id == "T-sequential-fixed-e2-s3"

    def test_overrides(self):
        overrides = BenchConfig(mode="per_task_model", policy="bucket", engines=8).overrides()
        assert overrides["executor"]["engines"] == 8
        assert overrides["executor"]["shared_model"] is False
        assert overrides["batch_policy"] == {"kind": "bucket"}


class TestRunBench:
    """Small end-to-end benchmark runs."""

    def test_r_completes_and_shares(self):
        """Every R query completes and the common join is shared."""
        run = run_bench(BenchConfig(**SMALL_R))
        assert run.metrics.completed == 4
        assert run.metrics.failed == 0
        assert run.metrics.cse_hits > 0

    def test_without_sharing(self):
        shared = run_bench(BenchConfig(**SMALL_R))
        private = run_bench(BenchConfig(**SMALL_R, mode="shared_model"))
        assert private.metrics.completed == 4
        assert private.metrics.shared_nodes == 0
        assert private.metrics.cse_hits < shared.metrics.cse_hits

    @pytest.mark.parametrize("mode", ["full", "per_task_model", "sequential", "export"])
    def test_t_modes_complete(self, mode):
        run = run_bench(BenchConfig(**SMALL_T, mode=mode))
        assert run.metrics.completed == 3
        assert set(run.metrics.tenant_throughput_qpm) == {"tenant0", "tenant1", "tenant2"}

    def test_buckets_pad_less(self):
        """Length buckets cut padding on the bimodal workload."""
        fixed = run_bench(BenchConfig(**SMALL_T, policy="fixed"))
        bucket = run_bench(BenchConfig(**SMALL_T, policy="bucket"))
        assert bucket.metrics.padding_fraction < fixed.metrics.padding_fraction

    def test_deterministic(self):
        """Two runs of the same config report identical metrics."""
        a = run_bench(BenchConfig(**SMALL_T))
        b = run_bench(BenchConfig(**SMALL_T))
        assert a.table_hash == b.table_hash
        assert a.metrics.to_dict() == b.metrics.to_dict()


class TestSweep:
    def test_parse_sweep(self):
        assert parse_sweep("engines=1,2,4") == ("engines", [1, 2, 4])
        for bad in ("engines", "colour=1", "engines=a", "engines="):
            with pytest.raises(ConfigError):
                parse_sweep(bad)

    def test_sweep_and_write(self, temp_dir):
        """One run per value; the report writes JSON and CSV side by side."""
        report = sweep(BenchConfig(**SMALL_T), "engines", [1, 2])
        assert [r.config.engines for r in report.runs] == [1, 2]
        json_path, csv_path = report.write(temp_dir / "out" / "t")
        data = json.loads(json_path.read_text())
        assert [r["config_id"] for r in data["runs"]] == ["T-full-default-e1-s7", "T-full-default-e2-s7"]
        assert csv_path.read_text().startswith("config_id,tenant,metric,value\n")


@pytest.fixture(scope="module")
def r_scaling():
    """Full-size R runs at 1 and 16 engines, with and without export, shared across asserts."""
    return {
        mode: {run.config.engines: run for run in sweep(BenchConfig(workload="R", mode=mode), "engines", [1, 16]).runs}
        for mode in ("full", "export")
    }


def _scaling(runs) -> float:
    return runs[16].metrics.throughput_qpm / runs[1].metrics.throughput_qpm


@pytest.mark.bench
class TestAcceptanceScale:
    """Full-size runs; select with ``pytest -m bench``."""

    def test_r_scales_with_engines(self, r_scaling):
        """Sixteen engines deliver at least 80% of linear speedup."""
        one, sixteen = r_scaling["full"][1], r_scaling["full"][16]
        assert sixteen.metrics.completed == one.metrics.completed
        assert sixteen.metrics.makespan_ms <= one.metrics.makespan_ms
        assert _scaling(r_scaling["full"]) >= 12.8

    def test_export_scales_worse(self, r_scaling):
        """The serial export link caps speedup at 60% of the in-engine scaling."""
        assert _scaling(r_scaling["export"]) <= 0.6 * _scaling(r_scaling["full"])

    def test_replicas_cost_memory(self, settings):
        """Per-tenant replicas hold one copy of the weights per tenant."""
        weights = settings.models.profile_for("hash_embedder").weight_size
        for seed in range(5):
            private = run_bench(BenchConfig(workload="T", mode="per_task_model", seed=seed))
            shared = run_bench(BenchConfig(workload="T", mode="shared_model", seed=seed))
            assert private.metrics.total_peak_memory_mb >= 8 * weights
            assert shared.metrics.total_peak_memory_mb < private.metrics.total_peak_memory_mb

    def test_t_buckets_halve_padding(self):
        fixed = run_bench(BenchConfig(workload="T", policy="fixed"))
        bucket = run_bench(BenchConfig(workload="T", policy="bucket"))
        assert bucket.metrics.padding_fraction <= 0.5 * fixed.metrics.padding_fraction

    @pytest.mark.parametrize("seed", range(5))
    def test_t_throughput_order(self, seed):
        """Length buckets beat fixed batches, which beat tenants taking turns."""
        throughput = {
            name: run_bench(BenchConfig(workload="T", rows=500, seed=seed, **config)).metrics.throughput_qpm
            for name, config in (
                ("bucket", {"policy": "bucket"}),
                ("fixed", {"policy": "fixed"}),
                ("sequential", {"mode": "sequential"}),
            )
        }
        assert throughput["bucket"] > throughput["fixed"] > throughput["sequential"]
