"""Tests for dynamic batching policies and the virtual clock."""

import pytest

from neurq.config.types import BatchPolicyConfig
from neurq.executor.batching import (
    BatchItem,
    BucketPolicy,
    FixedPolicy,
    MicroBatch,
    form_batches,
    make_policy,
)
from neurq.executor.clock import EventQueue, VirtualClock


def item(length: int, arrival: float = 0.0, index: int = 0) -> BatchItem:
    return BatchItem(query=0, node=0, index=index, key=index, payload=(), length=length, arrival=arrival)


def items(*lengths: int, arrival: float = 0.0) -> list[BatchItem]:
    return [item(n, arrival, i) for i, n in enumerate(lengths)]


class TestFixedPolicy:
    """Tests for FIFO batching."""

    def test_emits_full_batches(self):
        """Three items with B=2 give one batch now and one on expiry."""
        policy = FixedPolicy(2, 10.0)
        ready = form_batches(items(1, 2, 3), policy, now=0.0)
        assert [b.lengths for b in ready] == [[1, 2]]
        assert len(policy) == 1
        assert policy.poll(5.0) == []
        assert [b.lengths for b in policy.poll(10.0)] == [[3]]

    def test_deadline(self):
        policy = FixedPolicy(4, 10.0)
        policy.add(item(1, arrival=3.0))
        assert policy.next_deadline() == 13.0

    def test_drain(self):
        policy = FixedPolicy(4, 10.0)
        form_batches(items(1, 2), policy, now=0.0)
        assert [b.lengths for b in policy.poll(0.0, drain=True)] == [[1, 2]]
        assert len(policy) == 0
        assert policy.next_deadline() is None

    def test_fifo_padding(self):
        """Interleaved short and long items pad to 180 tokens under FIFO."""
        batches = form_batches(items(10, 100, 10, 100), FixedPolicy(2, 10.0), now=0.0)
        assert sum(b.padding for b in batches) == 180

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            FixedPolicy(0, 10.0)
        with pytest.raises(ValueError):
            FixedPolicy(2, 0.0)


class TestBucketPolicy:
    """Tests for length-aware buckets."""

    def test_buckets_remove_padding(self):
        """The same interleaved items split by length pad nothing."""
        batches = form_batches(items(10, 100, 10, 100), BucketPolicy(2, 10.0, [50]), now=0.0)
        assert sorted(b.lengths for b in batches) == [[10, 10], [100, 100]]
        assert sum(b.padding for b in batches) == 0

    def test_single_item_bucket(self):
        batches = form_batches(items(50), BucketPolicy(2, 10.0, [50]), now=10.0)
        assert [b.padding for b in batches] == [0]

    def test_expired_bucket_pulls_neighbours(self):
        """An underfull expired bucket fills from the next bucket."""
        policy = BucketPolicy(2, 10.0, [50])
        form_batches(items(10, 60), policy, now=0.0)
        batches = policy.poll(10.0)
        assert [b.lengths for b in batches] == [[10, 60]]
        assert batches[0].padding == 50

    def test_bucket_of(self):
        """Bucket i holds lengths in (b[i-1], b[i]]."""
        policy = BucketPolicy(2, 10.0, [16, 32])
        assert [policy.bucket_of(n) for n in (1, 16, 17, 32, 33)] == [0, 0, 1, 1, 2]

    def test_neighbours_nearest_first(self):
        policy = BucketPolicy(2, 10.0, [10, 20, 30])
        assert policy._neighbours(1) == [0, 2, 3]

    def test_rebucket_uses_observed_quantiles(self):
        """After the merge period boundaries follow the observed lengths."""
        policy = BucketPolicy(100, 1000.0, [5], merge_period=100.0)
        form_batches(items(1, 2, 3, 10, 20, 30), policy, now=0.0)
        assert policy.poll(100.0) == []
        assert policy.boundaries == [3]
        assert [len(b) for b in policy.buckets] == [3, 3]

    def test_boundaries_must_ascend(self):
        with pytest.raises(ValueError):
            BucketPolicy(2, 10.0, [32, 16])


class TestMicroBatch:
    """Tests for MicroBatch."""

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            MicroBatch(0, ())

    def test_split(self):
        batch = MicroBatch(3, tuple(items(1, 2, 3)), engine="e1", attempts=1)
        left, right = batch.split(9)
        assert (left.id, right.id) == (3, 9)
        assert left.lengths == [1]
        assert right.lengths == [2, 3]
        assert right.engine == "e1"

    def test_mixed_tenants(self):
        a = BatchItem(0, 0, 0, 0, (), 1, 0.0, tenant="a")
        b = BatchItem(1, 0, 0, 0, (), 1, 0.0, tenant="b")
        assert MicroBatch(0, (a,)).tenant == "a"
        assert MicroBatch(0, (a, b)).tenant == "*"


class TestMakePolicy:
    def test_kinds(self):
        assert isinstance(make_policy(BatchPolicyConfig()), FixedPolicy)
        bucket = make_policy(BatchPolicyConfig(kind="bucket", boundaries=[8]))
        assert isinstance(bucket, BucketPolicy)
        assert bucket.boundaries == [8]


class TestClock:
    """Tests for the virtual clock and event ordering."""

    def test_never_goes_back(self):
        clock = VirtualClock()
        clock.advance_to(5.0)
        with pytest.raises(ValueError):
            clock.advance_to(4.0)
        assert clock.now() == 5.0

    def test_event_order(self):
        """Ties on time break on admission, then node, then insertion."""
        queue = EventQueue()
        queue.push(1.0, "c", admission=1, node=0)
        queue.push(1.0, "b", admission=0, node=2)
        queue.push(1.0, "a", admission=0, node=1)
        queue.push(0.5, "first", admission=9)
        queue.push(1.0, "d", admission=1, node=0)
        assert [queue.pop().kind for _ in range(5)] == ["first", "a", "b", "c", "d"]
        assert queue.pop() is None
