"""Tests for the multi-tier cache."""

import pytest

from neurq.cache import BenefitDensity, CacheEntry, CacheKey, CacheKind, CacheManager, Tier
from neurq.catalog import Catalog, ModelRecord
from neurq.config.types import CacheConfig, TierConfig
from neurq.errors import TooLarge
from tests.conftest import USERS


def small_config(t0: float = 10.0, t1: float = 10.0, t2: float = 100.0) -> CacheConfig:
    return CacheConfig(
        tiers={
            "t0": TierConfig(t0, 0.01),
            "t1": TierConfig(t1, 0.1),
            "t2": TierConfig(t2, 1.0),
        }
    )


def key(name: str, kind: CacheKind = CacheKind.RELATIONAL, snapshot=1, model=None) -> CacheKey:
    return CacheKey(kind, name, snapshot, model)


class TestScore:
    """Tests for the benefit-density score."""

    def test_density(self):
        """Twice the size, half the score."""
        policy = BenefitDensity(0.99)
        small = CacheEntry(key("a"), 1.0, Tier.T0, access_count=2)
        large = CacheEntry(key("b"), 2.0, Tier.T0, access_count=2)
        assert policy.score(small, 0.0) == pytest.approx(2 * policy.score(large, 0.0))

    def test_decay(self):
        policy = BenefitDensity(0.99)
        entry = CacheEntry(key("a"), 1.0, Tier.T0)
        assert policy.score(entry, 100.0) == pytest.approx(0.99**100)


class TestPlacement:
    """Tests for put, demotion and eviction."""

    def test_put_get(self):
        cache = CacheManager(small_config())
        report = cache.put(key("a"), 2.0, value="rows")
        assert report.placed
        hit = cache.get(key("a"))
        assert hit.entry.value == "rows"
        assert hit.tier == Tier.T0
        assert hit.latency == pytest.approx(0.02)

    def test_denser_entry_demotes(self):
        """A denser newcomer pushes a sparse entry down one tier."""
        cache = CacheManager(small_config())
        cache.put(key("sparse"), 8.0)
        report = cache.put(key("dense"), 4.0)
        assert report.tier == Tier.T0
        assert report.demoted == [(key("sparse"), Tier.T0, Tier.T1)]
        assert cache.stats.demotions == 1

    def test_last_tier_evicts(self):
        cache = CacheManager(small_config(t2=10.0))
        cache.put(key("sparse"), 8.0, preferred_tier=Tier.T2)
        report = cache.put(key("dense"), 4.0, preferred_tier=Tier.T2)
        assert report.evicted == [key("sparse")]
        assert key("sparse") not in cache
        assert cache.stats.evictions == 1

    def test_pinned_entries_stay(self):
        """Pinned entries are never victims; the newcomer goes lower."""
        cache = CacheManager(small_config())
        cache.put(key("pinned"), 8.0, pinned=True)
        report = cache.put(key("dense"), 4.0)
        assert report.tier == Tier.T1
        assert cache.get(key("pinned")).tier == Tier.T0

    def test_equal_scores_do_not_displace(self):
        cache = CacheManager(small_config())
        cache.put(key("a"), 8.0)
        assert cache.put(key("b"), 8.0).tier == Tier.T1

    def test_too_large(self):
        cache = CacheManager(small_config())
        with pytest.raises(TooLarge):
            cache.put(key("huge"), 101.0)

    def test_size_must_be_positive(self):
        with pytest.raises(ValueError):
            CacheManager(small_config()).put(key("a"), 0.0)

    def test_disk_hit_promotes(self):
        """A T2 hit is served at disk cost and moves up to T1."""
        cache = CacheManager(small_config())
        cache.put(key("cold"), 1.0, preferred_tier=Tier.T2)
        hit = cache.get(key("cold"))
        assert hit.tier == Tier.T2
        assert hit.latency == pytest.approx(1.0)
        assert cache.get(key("cold")).tier == Tier.T1
        assert cache.stats.promotions == 1


class TestStats:
    def test_hits_and_misses_by_kind(self):
        cache = CacheManager(small_config())
        cache.put(key("e", CacheKind.EMBEDDING), 1.0)
        cache.get(key("e", CacheKind.EMBEDDING))
        cache.get(key("missing"))
        report = cache.report()
        assert report["hits"] == {"Embedding": 1}
        assert report["misses"] == {"RelationalIntermediate": 1}
        assert report["entries"][Tier.T0.value] == 1


class TestIndex:
    def test_snapshot_index_is_a_copy(self):
        """Later puts are invisible to an index taken earlier."""
        cache = CacheManager(small_config())
        cache.put(key("a"), 1.0)
        index = cache.snapshot_index()
        cache.put(key("b"), 1.0)
        assert set(index) == {key("a")}
        assert index[key("a")].size == 1.0


class TestInvalidation:
    """Catalog events retire superseded entries."""

    def test_append_retires_old_snapshots(self, settings):
        catalog = Catalog()
        catalog.create_table(USERS)
        cache = CacheManager(settings.cache)
        cache.attach(catalog)
        cache.put(key("join", snapshot=0), 1.0)
        cache.put(key("weights", CacheKind.MODEL_WEIGHTS, snapshot=None, model=("m", 1)), 1.0)
        catalog.append_rows("users", [(1, 30, "f")])
        assert key("join", snapshot=0) not in cache
        assert key("weights", CacheKind.MODEL_WEIGHTS, snapshot=None, model=("m", 1)) in cache

    def test_drop_model(self, settings):
        catalog = Catalog()
        cache = CacheManager(settings.cache)
        cache.attach(catalog)
        catalog.register_model(ModelRecord("m", "hash_embedder", ("body",)))
        cache.put(key("emb", CacheKind.EMBEDDING, model=("m", 1)), 1.0)
        catalog.drop_model("m")
        assert len(cache) == 0
        assert cache.stats.invalidations == 1

    def test_invalidate_predicate(self):
        cache = CacheManager(small_config())
        cache.put(key("a", snapshot=1), 1.0)
        cache.put(key("b", snapshot=2), 1.0)
        assert cache.invalidate(lambda k: k.snapshot == 1) == 1
        assert len(cache) == 1
