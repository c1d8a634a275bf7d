"""Tests for lowering, rewrites, fingerprints and logical explain."""

import pytest

from neurq.catalog import ModelRecord
from neurq.errors import PlanError, UnpinnedPlan
from neurq.executor import ReferenceInterpreter
from neurq.planner import apply_rewrites, explain, fingerprint, lower, pin
from neurq.planner.logical import AIInfer, AITrain, Project, Scan, Select, Values
from neurq.planner.rewrites import ConstantFolding, PredicatePushdown
from neurq.sql import parse
from neurq.sql.ast import BinaryOp, ColumnRef, Literal
from neurq.sql.binder import bind
from tests.conftest import LISTING_QUERY

JOIN_QUERY = (
    "SELECT u.user_id FROM users u JOIN ratings r ON u.user_id = r.user_id "
    "WHERE u.user_age > 30 AND r.rating > 4.0"
)
EMBED_QUERY = (
    "SELECT p.review_id, p.e FROM (PREDICT VALUE OF e WITH PRIMARY KEY review_id "
    "FROM reviews USING MODEL review_embedder) p WHERE p.review_id = 2"
)


def _lower(catalog, sql, params=None):
    return lower(bind(parse(sql), catalog, params))


def _scans(plan):
    return {n.alias: n for n in plan.walk() if isinstance(n, Scan)}


class TestLower:
    """Tests for lower."""

    def test_select_without_from(self, catalog):
        """SELECT 1 projects over a single empty row."""
        plan = _lower(catalog, "SELECT 1")
        assert plan == Project(Values((), ((),)), ((Literal(1), "col1"),))

    def test_train_on_becomes_train_then_infer(self, catalog):
        """TRAIN ON lowers to AITrain feeding AIInfer."""
        plan = _lower(catalog, LISTING_QUERY, {"UID": 1})
        infer = next(n for n in plan.walk() if isinstance(n, AIInfer))
        assert isinstance(infer.child, AITrain)
        assert infer.trained
        assert infer.output == ("pr.product_id", "pr.rating")
        assert infer.child.target == "r.rating"
        assert plan.output == ("product_id", "rating")

    def test_cte_is_inlined(self, catalog):
        """The CTE body becomes a subplan exposing ud.* columns."""
        plan = _lower(catalog, LISTING_QUERY, {"UID": 1})
        projects = [n for n in plan.walk() if isinstance(n, Project)]
        assert any(p.output == ("ud.user_age", "ud.user_gender") for p in projects)

    def test_using_model(self, db):
        """USING MODEL lowers to a Project of key and features under AIInfer."""
        plan = lower(bind(parse(EMBED_QUERY), db.catalog))
        infer = next(n for n in plan.walk() if isinstance(n, AIInfer))
        assert infer.binding.name == "review_embedder"
        assert isinstance(infer.child, Project)
        assert infer.child.output == ("reviews.review_id", "reviews.body")

    def test_model_statements_have_no_plan(self, catalog):
        """DROP MODEL cannot be lowered."""
        catalog.register_model(ModelRecord("m", "hash_embedder", ("body",)))
        with pytest.raises(PlanError):
            _lower(catalog, "DROP MODEL m")


class TestRewrites:
    """Tests for apply_rewrites and the individual rules."""

    def test_predicates_reach_the_scans(self, catalog):
        """Single-side conjuncts move below the join into the scan predicates."""
        result = apply_rewrites(_lower(catalog, JOIN_QUERY))
        assert not any(isinstance(n, Select) for n in result.plan.walk())
        scans = _scans(result.plan)
        assert scans["u"].predicate == BinaryOp(">", ColumnRef("u", "user_age"), Literal(30))
        assert scans["r"].predicate == BinaryOp(">", ColumnRef("r", "rating"), Literal(4.0))
        assert "predicate_pushdown" in result.trace

    def test_projection_narrows_scans(self, catalog):
        """Scans only read columns some ancestor needs."""
        result = apply_rewrites(_lower(catalog, JOIN_QUERY))
        scans = _scans(result.plan)
        assert scans["u"].projection == ("user_id",)
        assert scans["r"].projection == ("user_id",)

    def test_rules_return_same_object_when_idle(self, catalog):
        """A rule that does not fire hands back the input object."""
        plan = _lower(catalog, "SELECT user_id FROM users")
        assert PredicatePushdown().apply(plan) is plan
        assert ConstantFolding().apply(plan) is plan

    def test_fixpoint(self, catalog):
        """Rewriting an already rewritten plan changes nothing."""
        once = apply_rewrites(_lower(catalog, LISTING_QUERY, {"UID": 1}))
        twice = apply_rewrites(once.plan)
        assert once.changed
        assert not twice.changed
        assert twice.plan is once.plan

    def test_constant_folding(self, catalog):
        """Literal arithmetic folds and TRUE conjuncts vanish."""
        plan = _lower(catalog, "SELECT user_id FROM users WHERE 1 = 1 AND user_age > 10 + 20")
        result = apply_rewrites(plan)
        scan = _scans(result.plan)["users"]
        assert scan.predicate == BinaryOp(">", ColumnRef("users", "user_age"), Literal(30))

    def test_key_filter_moves_below_inference(self, db):
        """A key predicate over model inference is evaluated before the model runs."""
        result = apply_rewrites(lower(bind(parse(EMBED_QUERY), db.catalog)))
        assert "ai_infer_pullup" in result.trace
        assert not any(isinstance(n, Select) for n in result.plan.walk())
        scan = _scans(result.plan)["reviews"]
        assert scan.predicate == BinaryOp("=", ColumnRef("reviews", "review_id"), Literal(2))

    def test_trained_inference_keeps_filter_above(self, catalog):
        """Key filters over trained inference stay above it."""
        sql = (
            "SELECT pr.product_id FROM (PREDICT VALUE OF r.rating WITH PRIMARY KEY r.product_id "
            "FROM ratings r TRAIN ON r.user_id) pr WHERE pr.product_id = 101"
        )
        result = apply_rewrites(_lower(catalog, sql))
        assert any(
            isinstance(n, Select) and isinstance(n.child, AIInfer) for n in result.plan.walk()
        )

    def test_rewrites_preserve_results(self, db):
        """The rewritten join returns the same rows as the naive plan."""
        naive = pin(lower(bind(parse(JOIN_QUERY), db.catalog)), db.catalog.version)
        interpreter = ReferenceInterpreter(db.catalog, db.runtime)
        expected = interpreter.execute(naive)
        actual = db.reference(JOIN_QUERY)
        assert actual.multiset() == expected.multiset()
        assert sorted(actual.column("user_id")) == [1, 1, 4]


class TestFingerprint:
    """Tests for fingerprint and pin."""

    def test_unpinned_raises(self, catalog):
        """Scans without a snapshot cannot be fingerprinted strictly."""
        with pytest.raises(UnpinnedPlan):
            fingerprint(_lower(catalog, "SELECT user_id FROM users"))

    def test_lenient_mode(self, catalog):
        """strict=False hashes missing pins instead of raising."""
        assert len(fingerprint(_lower(catalog, "SELECT user_id FROM users"), strict=False)) == 32

    def test_deterministic(self, db):
        """The same query planned twice has the same fingerprint."""
        assert fingerprint(db.plan(LISTING_QUERY, {"UID": 1})) == fingerprint(db.plan(LISTING_QUERY, {"UID": 1}))

    def test_snapshot_changes_fingerprint(self, catalog):
        """Pins are part of the identity."""
        plan = _lower(catalog, "SELECT user_id FROM users")
        assert fingerprint(pin(plan, 1)) != fingerprint(pin(plan, 2))

    def test_join_order_insensitive(self, db):
        """Swapping join sides does not change the fingerprint."""
        a = db.plan("SELECT u.user_id FROM users u JOIN ratings r ON u.user_id = r.user_id")
        b = db.plan("SELECT u.user_id FROM ratings r JOIN users u ON r.user_id = u.user_id")
        assert fingerprint(a) == fingerprint(b)

    def test_conjunct_order_insensitive(self, db):
        """Reordered conjuncts hash the same."""
        a = db.plan("SELECT user_id FROM users WHERE user_age > 30 AND user_gender = 'f'")
        b = db.plan("SELECT user_id FROM users WHERE user_gender = 'f' AND user_age > 30")
        assert fingerprint(a) == fingerprint(b)

    def test_different_params_differ(self, db):
        """Different parameter values are different queries."""
        a = db.plan(LISTING_QUERY, {"UID": 1})
        b = db.plan(LISTING_QUERY, {"UID": 2})
        assert fingerprint(a) != fingerprint(b)

    def test_pin_stamps_ai_nodes(self, catalog):
        """pin reaches AITrain and AIInfer as well as scans."""
        plan = pin(_lower(catalog, LISTING_QUERY, {"UID": 1}), 2)
        stamped = [n for n in plan.walk() if isinstance(n, (Scan, AITrain, AIInfer))]
        assert stamped
        assert all(n.snapshot == 2 for n in stamped)


class TestExplain:
    """Tests for explain."""

    def test_lines_carry_fingerprints_and_pins(self, db):
        """Every line starts with a fingerprint prefix; scans show their snapshot."""
        text = db.explain(LISTING_QUERY, {"UID": 1})
        lines = text.splitlines()
        assert all(len(line.strip().split(" ", 1)[0]) == 8 for line in lines)
        assert "????????" not in text
        assert "AITrain" in text
        assert f"snapshot={db.catalog.version}" in text

    def test_unpinned_placeholder(self, catalog):
        """Before pinning the fingerprint column is a placeholder."""
        text = explain(_lower(catalog, "SELECT user_id FROM users"))
        assert text.splitlines()[-1].strip().startswith("????????")

    def test_model_version_and_mask(self, db):
        """A sliced model shows its version and the tenant's mask."""
        sql = (
            "PREDICT VALUE OF r.score WITH PRIMARY KEY r.product_id "
            "FROM ratings r USING MODEL rating_model"
        )
        text = db.explain(sql, tenant="support")
        assert "version=1" in text
        assert "mask=product_id" in text
        assert "mask=" not in db.explain(sql, tenant="analyst")
