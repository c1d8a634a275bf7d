"""Tests for cost/quality estimation, bounded-objective search and cache substitution."""

from dataclasses import replace

import pytest

from neurq.cache import CacheEntry, CacheIndex, Tier
from neurq.catalog import ModelRecord
from neurq.config.types import DbCostConfig, OpCost
from neurq.errors import Infeasible, MissingStats, OptimizerError
from neurq.optimizer import (
    CostQuality,
    Objective,
    OptimizerContext,
    PhysicalOp,
    cache_aware_substitute,
    choose,
    enumerate_physical,
    estimate,
    explain_physical,
    optimize,
    parse_objective,
)
from neurq.optimizer.cost import relational_cost
from neurq.optimizer.physical import CACHE_READ
from neurq.optimizer.search import pareto
from neurq.optimizer.substitute import entry_key
from neurq.planner import apply_rewrites, lower, pin
from neurq.planner.logical import Values
from neurq.sql import parse
from neurq.sql.binder import bind

PREDICT_SQL = (
    "PREDICT VALUE OF r.score WITH PRIMARY KEY r.product_id "
    "FROM ratings r USING MODEL rating_model"
)
JOIN_SQL = "SELECT u.user_id FROM users u JOIN ratings r ON u.user_id = r.user_id"
READ_COST = {Tier.T0: 0.01, Tier.T1: 0.1, Tier.T2: 1.0}


def _leaf(latency: float, quality: float) -> PhysicalOp:
    return PhysicalOp("Values", Values((), ((),)), cost=latency, quality=quality).retotal()


def _pinned(catalog, sql):
    plan = apply_rewrites(lower(bind(parse(sql), catalog))).plan
    return pin(plan, catalog.version)


@pytest.fixture
def model_catalog(catalog):
    """Catalog with a ridge model whose direct/staged qualities are known."""
    catalog.register_model(ModelRecord(
        "rating_model", "ridge_regressor", ("user_id", "product_id"), "rating", "ratings",
        quality_profile={"direct|product_id,user_id": 0.8, "staged|product_id,user_id": 0.95},
    ))
    return catalog


def _context(settings, catalog, residency=None):
    stats = {t.name: catalog.statistics(t.name) for t in catalog.tables()}
    return OptimizerContext(settings, stats, catalog, residency=residency or {})


class TestCostQuality:
    """Tests for CostQuality and PhysicalOp.combine."""

    def test_dominates(self):
        """Faster at equal quality dominates; a trade-off does not."""
        assert CostQuality(10, 0.9).dominates(CostQuality(30, 0.9))
        assert not CostQuality(10, 0.8).dominates(CostQuality(30, 0.9))
        assert not CostQuality(30, 0.9).dominates(CostQuality(10, 0.8))
        assert not CostQuality(10, 0.9).dominates(CostQuality(10, 0.9))

    def test_combine(self):
        """Own cost adds to the slowest child; quality is the minimum."""
        total = PhysicalOp.combine(5.0, 0.95, (_leaf(10, 0.9), _leaf(20, 0.7)))
        assert total == CostQuality(25.0, 0.7)


class TestObjective:
    """Tests for parse_objective and Objective."""

    def test_quality_bound(self):
        assert parse_objective("quality>=0.9") == Objective.min_latency(0.9)

    def test_latency_bound(self):
        assert parse_objective("latency<=100ms") == Objective.max_quality(100.0)
        assert parse_objective(" latency <= 5 ") == Objective.max_quality(5.0)

    @pytest.mark.parametrize("text", ["quality<=0.9", "latency>=10ms", "speed>=1", "quality>=1.5", ""])
    def test_rejects(self, text):
        """Wrong direction, unknown metric and out-of-range bounds are errors."""
        with pytest.raises(OptimizerError):
            parse_objective(text)

    def test_str_round_trips(self):
        """The rendered objective parses back to itself."""
        for objective in (Objective.min_latency(0.9), Objective.max_quality(100.0)):
            assert parse_objective(str(objective)) == objective


class TestChoose:
    """Tests for choose and pareto."""

    FAST = (10.0, 0.8)
    GOOD = (30.0, 0.9)

    def _candidates(self):
        return [_leaf(*self.FAST), _leaf(*self.GOOD)]

    @pytest.mark.parametrize(
        "objective, expected",
        [
            (Objective.min_latency(0.85), GOOD),
            (Objective.min_latency(0.5), FAST),
            (Objective.max_quality(20.0), FAST),
            (Objective.max_quality(50.0), GOOD),
        ],
    )
    def test_bounded_choice(self, objective, expected):
        """Each bound picks the best candidate that satisfies it."""
        chosen = choose(self._candidates(), objective)
        assert (chosen.total.latency, chosen.total.quality) == expected

    def test_infeasible_quality(self):
        """An unreachable quality bound reports the best quality available."""
        with pytest.raises(Infeasible) as exc:
            choose(self._candidates(), Objective.min_latency(0.95))
        assert exc.value.best == CostQuality(*self.GOOD)

    def test_infeasible_latency(self):
        """An unreachable latency bound reports the fastest candidate."""
        with pytest.raises(Infeasible) as exc:
            choose(self._candidates(), Objective.max_quality(5.0))
        assert exc.value.best == CostQuality(*self.FAST)

    def test_no_candidates(self):
        with pytest.raises(OptimizerError):
            choose([], Objective.min_latency(0.0))

    def test_pareto_drops_dominated(self):
        """Slower and worse candidates are pruned; exact ties survive."""
        kept = pareto([_leaf(10, 0.8), _leaf(30, 0.9), _leaf(40, 0.85), _leaf(10, 0.8)])
        assert sorted((c.total.latency, c.total.quality) for c in kept) == [
            (10, 0.8), (10, 0.8), (30, 0.9),
        ]


class TestRelationalCost:
    """Tests for relational_cost."""

    def test_full_scan(self):
        """setup + per_row * rows."""
        db = DbCostConfig(scan=OpCost(1.0, 0.01))
        assert relational_cost(db, "FullScan", [1000]) == pytest.approx(11.0)

    def test_nested_loop_is_per_pair(self):
        db = DbCostConfig(nested_loop=OpCost(0.5, 0.0001))
        assert relational_cost(db, "NestedLoopJoin", [100, 200]) == pytest.approx(2.5)


class TestEnumerate:
    """Tests for enumerate_physical."""

    def test_join_alternatives(self, settings, catalog):
        """Equi-joins get nested-loop, hash and merge alternatives."""
        candidates = enumerate_physical(_pinned(catalog, JOIN_SQL), _context(settings, catalog), prune=False)
        impls = {op.impl for c in candidates for op in c.walk() if op.impl.endswith("Join")}
        assert impls == {"NestedLoopJoin", "HashJoin", "MergeJoin"}

    def test_pruning_keeps_the_fastest(self, settings, catalog):
        """With equal quality the frontier holds only the minimum latency."""
        plan = _pinned(catalog, JOIN_SQL)
        ctx = _context(settings, catalog)
        full = enumerate_physical(plan, ctx, prune=False)
        pruned = enumerate_physical(plan, ctx)
        fastest = min(c.total.latency for c in full)
        assert all(c.total.latency == fastest for c in pruned)

    def test_missing_stats(self, settings, catalog):
        with pytest.raises(MissingStats):
            enumerate_physical(_pinned(catalog, JOIN_SQL), OptimizerContext(settings, {}))

    def test_ridge_variants(self, settings, model_catalog):
        """Ridge inference is offered direct and staged with profiled qualities."""
        candidates = enumerate_physical(
            _pinned(model_catalog, PREDICT_SQL), _context(settings, model_catalog), prune=False
        )
        ai = {(op.variant, op.quality) for c in candidates for op in c.walk() if op.impl == "AIInfer"}
        assert ai == {("direct", 0.8), ("staged", 0.95)}

    def test_direct_infer_cost(self, settings, model_catalog):
        """8 items of a cold ridge model: load 1 + setup 2 + 8 * 0.25."""
        candidates = enumerate_physical(
            _pinned(model_catalog, PREDICT_SQL), _context(settings, model_catalog), prune=False
        )
        direct = next(
            op for c in candidates for op in c.walk() if op.impl == "AIInfer" and op.variant == "direct"
        )
        assert direct.cost == pytest.approx(5.0)
        staged = next(
            op for c in candidates for op in c.walk() if op.impl == "AIInfer" and op.variant == "staged"
        )
        # load, then base, relation modeling and fusion batches over 8 items
        assert staged.cost == pytest.approx(1.0 + 4.0 + (2.0 + 0.25 * 8) + (1.0 + 0.1 * 8))


class TestOptimize:
    """Tests for optimize under different objectives."""

    def _ai(self, plan):
        return next(op for op in plan.walk() if op.impl == "AIInfer")

    def test_quality_bound_picks_staged(self, settings, model_catalog):
        chosen = optimize(
            _pinned(model_catalog, PREDICT_SQL), _context(settings, model_catalog), Objective.min_latency(0.9)
        )
        assert self._ai(chosen).variant == "staged"
        assert chosen.total.quality == pytest.approx(0.95)

    def test_loose_bound_picks_direct(self, settings, model_catalog):
        chosen = optimize(
            _pinned(model_catalog, PREDICT_SQL), _context(settings, model_catalog), Objective.min_latency(0.5)
        )
        assert self._ai(chosen).variant == "direct"

    def test_latency_bound(self, settings, model_catalog):
        """A 10ms budget rules the staged pipeline out."""
        chosen = optimize(
            _pinned(model_catalog, PREDICT_SQL), _context(settings, model_catalog), Objective.max_quality(10.0)
        )
        assert self._ai(chosen).variant == "direct"
        assert chosen.total.latency <= 10.0

    def test_resident_engine_preferred(self, settings, model_catalog):
        """An engine already holding the weights skips the load term."""
        ctx = _context(settings, model_catalog, {"e0": frozenset({("rating_model", 1)})})
        chosen = optimize(_pinned(model_catalog, PREDICT_SQL), ctx, Objective.min_latency(0.5))
        ai = self._ai(chosen)
        assert ai.engine == "e0"
        assert ai.cost == pytest.approx(4.0)

    def test_explain_physical(self, settings, model_catalog):
        """Per-operator lines name the variant; the last line is the total."""
        chosen = optimize(
            _pinned(model_catalog, PREDICT_SQL), _context(settings, model_catalog), Objective.min_latency(0.9)
        )
        text = explain_physical(chosen)
        assert "AIInfer [staged" in text
        last = text.splitlines()[-1]
        assert last.startswith("total: latency=")
        assert last.endswith("quality=0.950")


class TestCacheSubstitution:
    """Tests for cache_aware_substitute."""

    def _chosen(self, settings, catalog):
        return optimize(_pinned(catalog, PREDICT_SQL), _context(settings, catalog), Objective.min_latency(0.5))

    def test_cached_inference_becomes_a_read(self, settings, model_catalog):
        """A cached inference result replaces its subtree and lowers the total."""
        chosen = self._chosen(settings, model_catalog)
        ai = next(op for op in chosen.walk() if op.impl == "AIInfer")
        key = entry_key(ai)
        index = CacheIndex({key: CacheEntry(key, 1.0, Tier.T0)})
        out = cache_aware_substitute(chosen, index, READ_COST)
        read = next(op for op in out.walk() if op.impl == CACHE_READ)
        assert read.replaced is ai
        assert read.cost == pytest.approx(0.01)
        assert out.total.latency < chosen.total.latency
        assert out.total.quality == chosen.total.quality

    def test_slow_read_is_ignored(self, settings, model_catalog):
        """Reading 1000 MB from disk is slower than recomputing, so nothing changes."""
        chosen = self._chosen(settings, model_catalog)
        ai = next(op for op in chosen.walk() if op.impl == "AIInfer")
        key = entry_key(ai)
        index = CacheIndex({key: CacheEntry(key, 1000.0, Tier.T2)})
        assert cache_aware_substitute(chosen, index, READ_COST) is chosen

    def test_other_snapshot_never_matches(self, settings, model_catalog):
        """Entries pinned to another snapshot are not substituted."""
        chosen = self._chosen(settings, model_catalog)
        ai = next(op for op in chosen.walk() if op.impl == "AIInfer")
        key = entry_key(ai)
        stale = type(key)(key.kind, key.fingerprint, key.snapshot - 1, key.model)
        index = CacheIndex({stale: CacheEntry(stale, 1.0, Tier.T0)})
        assert cache_aware_substitute(chosen, index, READ_COST) is chosen


class TestEstimate:
    """Tests for estimating a finished physical plan."""

    def _stats(self, catalog):
        return {t.name: catalog.statistics(t.name) for t in catalog.tables()}

    @pytest.mark.parametrize("sql", [PREDICT_SQL, JOIN_SQL])
    def test_matches_enumerated_totals(self, settings, model_catalog, sql):
        candidates = enumerate_physical(
            _pinned(model_catalog, sql), _context(settings, model_catalog), prune=False
        )
        stats = self._stats(model_catalog)
        for candidate in candidates:
            total = estimate(candidate, stats, settings, model_catalog)
            assert total.latency == pytest.approx(candidate.total.latency)
            assert total.quality == candidate.total.quality

    def test_residency_term(self, settings, model_catalog):
        """The same plan estimated warm and cold differs by exactly the load cost."""
        resident = {"e0": frozenset({("rating_model", 1)})}
        chosen = optimize(
            _pinned(model_catalog, PREDICT_SQL), _context(settings, model_catalog, resident),
            Objective.min_latency(0.5),
        )
        stats = self._stats(model_catalog)
        warm = estimate(chosen, stats, settings, model_catalog, resident)
        cold = estimate(chosen, stats, settings, model_catalog)
        load = settings.models.profile_for("ridge_regressor").load_cost
        assert cold.latency - warm.latency == pytest.approx(load)

    def test_rows_drive_relational_cost(self, settings, catalog):
        """Scanning a larger table estimates a slower plan."""
        plan = _pinned(catalog, "SELECT user_id FROM users")
        (candidate,) = enumerate_physical(plan, _context(settings, catalog))
        stats = self._stats(catalog)
        bigger = dict(stats, users=replace(stats["users"], row_count=stats["users"].row_count * 100))
        assert estimate(candidate, bigger, settings).latency > estimate(candidate, stats, settings).latency
