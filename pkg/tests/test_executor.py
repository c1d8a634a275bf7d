"""Tests for the concurrent executor: correctness, sharing, budgets and modes."""

import asyncio
from dataclasses import replace

import pytest

from neurq.errors import AdmissionRejected, EngineOverloaded, ExecutionError
from tests.conftest import LISTING_QUERY, make_db

EMBED_ALL = "PREDICT VALUE OF e WITH PRIMARY KEY review_id FROM reviews USING MODEL review_embedder"
JOIN_QUERY = "SELECT u.user_id, r.rating FROM users u JOIN ratings r ON u.user_id = r.user_id WHERE r.rating > 3.5"
RATING_PREDICT = (
    "PREDICT VALUE OF r.score WITH PRIMARY KEY r.product_id FROM ratings r USING MODEL rating_model"
)


class TestCorrectness:
    """Executor results match the reference interpreter."""

    @pytest.mark.parametrize(
        "sql",
        [
            "SELECT 1",
            "SELECT user_id, user_age + 1 FROM users WHERE user_gender = 'f'",
            JOIN_QUERY,
            "SELECT user_gender, COUNT(*) FROM users GROUP BY user_gender",
            EMBED_ALL,
            RATING_PREDICT,
        ],
    )
    def test_matches_reference(self, db, sql):
        assert db.execute(sql).multiset() == db.reference(sql).multiset()

    def test_listing_query(self, db):
        """The ratings query returns the products rated by similar users, best first."""
        rows = db.execute(LISTING_QUERY, params={"UID": 1})
        expected = db.reference(LISTING_QUERY, params={"UID": 1})
        assert rows.columns == ("product_id", "rating")
        assert rows.rows == expected.rows
        assert set(rows.column("product_id")) == {101, 103, 104, 106, 107, 108}
        predicted = rows.column("rating")
        assert predicted == sorted(predicted, reverse=True)

    def test_staged_pipeline(self, db):
        """A quality bound above the direct default runs the staged pipeline end to end."""
        plan = db.physical(LISTING_QUERY, "quality>=0.85", params={"UID": 1})
        assert [op.variant for op in plan.walk() if op.impl == "AIInfer"] == ["staged"]
        rows = db.execute(LISTING_QUERY, objective="quality>=0.85", params={"UID": 1})
        assert set(rows.column("product_id")) == {101, 103, 104, 106, 107, 108}
        predicted = rows.column("rating")
        assert predicted == sorted(predicted, reverse=True)

    def test_real_time_mode(self):
        """Wall-clock mode computes the same rows as virtual time."""
        virtual = make_db("cache.enabled=false")
        real = make_db("cache.enabled=false", "executor.mode=real_time", "executor.real_time_scale=0")
        try:
            assert real.execute(EMBED_ALL).multiset() == virtual.execute(EMBED_ALL).multiset()
        finally:
            virtual.close()
            real.close()

    def test_faults_are_retried(self):
        """Injected engine faults requeue batches without changing results."""
        db = make_db("cache.enabled=false", "executor.fault_rate=0.5")
        try:
            assert db.execute(EMBED_ALL).multiset() == db.reference(EMBED_ALL).multiset()
        finally:
            db.close()


class TestBatchAccounting:
    """Item, token and padding counters of one embedding query."""

    def test_counters(self, db):
        """Three reviews of 5, 2 and 11 tokens form one drained batch."""
        db.execute(EMBED_ALL)
        metrics = db.executor.metrics()
        assert (metrics.batches, metrics.items, metrics.tokens) == (1, 3, 18)
        assert metrics.padding_tokens == 15

    def test_oversized_batch_is_split(self):
        """A batch over the token budget is halved until each part fits."""
        db = make_db("cache.enabled=false", "executor.engines=1", "executor.token_budget=12")
        try:
            rows = db.execute(EMBED_ALL)
            assert len(rows) == 3
            assert db.executor.metrics().splits == 2
        finally:
            db.close()

    def test_single_item_over_budget_fails(self):
        db = make_db("cache.enabled=false", "executor.engines=1", "executor.token_budget=4")
        try:
            with pytest.raises(EngineOverloaded):
                db.execute(EMBED_ALL)
            assert db.executor.metrics().failed == 1
        finally:
            db.close()


class TestSharing:
    """Common subexpression sharing across concurrent queries."""

    def _run_twice(self, *overrides):
        db = make_db("cache.enabled=false", *overrides)
        try:
            first = db.submit(LISTING_QUERY, params={"UID": 1})
            second = db.submit(LISTING_QUERY, params={"UID": 1})
            metrics = db.run()
            return first.result(), second.result(), metrics
        finally:
            db.close()

    def test_identical_queries_run_once(self):
        a, b, metrics = self._run_twice()
        assert a.rows == b.rows
        assert metrics.cse_hits >= 1
        assert metrics.shared_nodes > 0

    def test_sharing_saves_executions(self):
        _, _, shared = self._run_twice()
        _, _, private = self._run_twice("executor.cse=false")
        assert shared.executions < private.executions
        assert private.shared_nodes == 0


class TestAdmission:
    """Tests for submit."""

    def test_queue_depth(self):
        db = make_db("cache.enabled=false", "executor.queue_depth=1")
        try:
            db.submit("SELECT 1")
            with pytest.raises(AdmissionRejected):
                db.submit("SELECT 1")
        finally:
            db.close()

    def test_unknown_engine_hint(self, db):
        plan = db.physical("SELECT user_id FROM users")
        with pytest.raises(ExecutionError):
            db.executor.submit(replace(plan, engine="e99"))

    def test_snapshot_is_pinned_at_submit(self, db):
        """Rows appended after submission are invisible to the query."""
        handle = db.submit("SELECT user_id FROM users")
        db.catalog.append_rows("users", [(7, 35, "f")])
        db.run()
        assert sorted(handle.result().column("user_id")) == [1, 2, 3, 4, 5, 6]
        assert handle.lineage["snapshot"] == db.catalog.version - 1

    def test_lineage_names_model_versions(self, db):
        handle = db.submit(EMBED_ALL)
        db.run()
        assert handle.lineage == {"snapshot": db.catalog.version, "models": ["review_embedder@1"]}

    def test_new_model_version(self, db):
        """Queries after CREATE MODEL pin the new version."""
        status = db.execute(
            "CREATE MODEL rating_model KIND ridge_regressor ON ratings "
            "FEATURES (user_id, product_id) TARGET rating"
        )
        assert status.rows == [("created model rating_model@2",)]
        handle = db.submit(RATING_PREDICT)
        db.run()
        assert handle.lineage["models"] == ["rating_model@2"]

    def test_handle_is_awaitable(self, db):
        handle = db.submit("SELECT 1")
        db.run()

        async def wait():
            return await handle

        assert asyncio.run(wait()).rows == [(1,)]


class TestDeterminism:
    def _metrics(self):
        db = make_db("cache.enabled=false")
        try:
            db.submit(LISTING_QUERY, params={"UID": 1}, at=0.0)
            db.submit(LISTING_QUERY, params={"UID": 2}, at=1.0)
            db.submit(EMBED_ALL, at=1.0)
            return db.run().to_dict()
        finally:
            db.close()

    def test_same_inputs_same_metrics(self):
        """Virtual time makes a run a pure function of its inputs."""
        assert self._metrics() == self._metrics()


class TestSchedulingModes:
    """Tenant ordering, in-flight caps and export-then-execute."""

    def test_tenant_sequential(self):
        """The second tenant is admitted only after the first one drains."""
        db = make_db("cache.enabled=false", "executor.tenant_sequential=true")
        try:
            db.submit(EMBED_ALL, tenant="analyst")
            db.submit(RATING_PREDICT, tenant="support")
            db.run()
            first, second = db.executor.queries[0].record, db.executor.queries[1].record
            assert second.admitted >= first.finished
        finally:
            db.close()

    def test_inflight_cap(self):
        db = make_db("cache.enabled=false", "executor.max_inflight_per_tenant=1", "batch_policy.max_items=1")
        try:
            assert db.execute(EMBED_ALL).multiset() == db.reference(EMBED_ALL).multiset()
            assert db.executor.metrics().batches == 3
        finally:
            db.close()

    def test_export_adds_link_latency(self):
        """Shipping each AI batch over the export link delays completion."""
        local = make_db("cache.enabled=false")
        export = make_db("cache.enabled=false", "executor.export_execute=true")
        try:
            local.execute(EMBED_ALL)
            export.execute(EMBED_ALL)
            assert export.executor.metrics().makespan_ms > local.executor.metrics().makespan_ms
        finally:
            local.close()
            export.close()


class TestCaching:
    """Materialized results feed later plans."""

    def test_cached_inference_skips_the_model(self, cached_db):
        first = cached_db.execute(EMBED_ALL)
        assert cached_db.executor.metrics().items == 3
        assert "CacheRead" in cached_db.explain_physical(EMBED_ALL)
        second = cached_db.execute(EMBED_ALL)
        assert second.multiset() == first.multiset()
        assert cached_db.executor.metrics().items == 0
        assert cached_db.cache.stats.hits.get("Embedding", 0) >= 1

    def test_append_invalidates(self, cached_db):
        """New rows retire results computed at older snapshots."""
        cached_db.execute(EMBED_ALL)
        cached_db.catalog.append_rows("reviews", [(4, "meh")])
        assert "CacheRead" not in cached_db.explain_physical(EMBED_ALL)
        assert len(cached_db.execute(EMBED_ALL)) == 4


class TestRunLifecycle:
    """Per-run executor state is retired; finished work is reused via the cache only."""

    def test_finished_nodes_are_not_reattached(self, db):
        first = db.submit(EMBED_ALL)
        db.run()
        old_root = db.executor.queries[first.id].root
        second = db.submit(EMBED_ALL)
        db.run()
        new_root = db.executor.queries[second.id].root
        assert new_root is not old_root
        assert new_root.exec_count == 1
        assert db.executor.metrics().cse_hits == 0
        assert db.executor.graph.shared == {}

    def test_state_does_not_grow(self, cached_db):
        """Repeating a query keeps one query in the executor and hits the cache."""
        for _ in range(5):
            cached_db.execute(EMBED_ALL)
            assert len(cached_db.executor.queries) == 1
        assert cached_db.executor.metrics().cse_hits == 0
        assert cached_db.cache.stats.hits["Embedding"] >= 4

    def test_metrics_cover_the_last_run(self, db):
        db.execute(EMBED_ALL)
        db.execute("SELECT 1")
        metrics = db.executor.metrics()
        assert (metrics.queries, metrics.items) == (1, 0)

    def test_residency_survives_runs(self, db):
        """Weights loaded in one run still steer placement in the next."""
        db.execute(EMBED_ALL)
        resident = db.executor.residency()
        assert any(("review_embedder", 1) in models for models in resident.values())
