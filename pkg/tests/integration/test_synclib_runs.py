"""
Integration tests running the synchronization library over many schedules.

Tests cover:
- MPMC queue exactly-once delivery, with and without evictions
- Bakery mutual exclusion over many seeds and shapes, ten thousand runs on two by two processors
- Bakery without read-side flushes letting two holders in, scripted and over random seeds
- Multi-node pipelines and their stale-cache control
"""
import pytest

from fedcoh.services.bakery import bakery_acquire, bakery_lock_create, bakery_release
from fedcoh.services.memcore import mem_new
from fedcoh.services.monitors import MutexMonitor
from fedcoh.services.pipeline import Pipeline
from fedcoh.services.queue_demo import run_queue_demo
from fedcoh.services.scheduler import Scheduler, run_sync, schedule
from fedcoh.services.topology import build_topology

pytestmark = [pytest.mark.integration, pytest.mark.slow, pytest.mark.synclib]


def _increments(m, lock, monitor, p, rounds):
    for _ in range(rounds):
        yield from bakery_acquire(lock, p)
        monitor.enter(p)
        m.flush_line(p, "counter")
        value = m.read(p, "counter")
        yield from schedule()
        m.write(p, "counter", value + 1)
        m.flush_line(p, "counter")
        monitor.exit(p)
        bakery_release(lock, p)
        yield from schedule()


class TestQueue:
    """Test the MPMC queue over many schedules."""

    @pytest.mark.parametrize("seed", range(50))
    def test_exactly_once(self, seed):
        """Test four producers and four consumers deliver ten thousand payloads once."""
        report = run_queue_demo(producers=4, consumers=4, items=10_000, capacity=64, seed=seed)
        assert report.completed
        assert report.exactly_once
        assert report.protocol_violations == 0
        assert report.stats["notifications"] <= report.stats["wake_cycles"]

    @pytest.mark.parametrize("seed", range(50))
    def test_exactly_once_with_evictions(self, seed):
        """Test random evictions never lose or duplicate payloads."""
        report = run_queue_demo(producers=4, consumers=4, items=10_000, capacity=64, seed=seed,
                                eviction_rate=0.02)
        assert report.exactly_once
        assert report.protocol_violations == 0


class TestBakery:
    """Test the bakery lock over many schedules."""

    @pytest.mark.parametrize("seed", range(100))
    def test_three_nodes(self, seed):
        """Test three participants on three nodes."""
        m = mem_new(build_topology(3), {"counter": 0})
        procs = ["p0", "p1", "p2"]
        lock = bakery_lock_create(m, procs)
        monitor = MutexMonitor()
        result = Scheduler(seed).run([_increments(m, lock, monitor, p, 4) for p in procs])
        assert result.completed
        assert monitor.violations == 0
        assert m.memory_value("counter") == 12

    @pytest.mark.parametrize("seed", range(20))
    def test_mixed_nodes_with_evictions(self, seed):
        """Test evictions do not break exclusion among four participants on two nodes."""
        from fedcoh.services.memcore import EvictionConfig

        m = mem_new(build_topology(2, 1, 1, 2), {"counter": 0}, EvictionConfig("random", 0.05, seed))
        procs = ["p0", "p1", "p2", "p3"]
        lock = bakery_lock_create(m, procs)
        monitor = MutexMonitor()
        result = Scheduler(seed).run([_increments(m, lock, monitor, p, 2) for p in procs])
        assert result.completed
        assert monitor.violations == 0
        assert m.memory_value("counter") == 8

    BATCHES = 100
    PER_BATCH = 100

    @pytest.mark.parametrize("batch", range(BATCHES))
    def test_two_by_two(self, batch):
        """Test two nodes of two processors over ten thousand schedules."""
        for run in range(self.PER_BATCH):
            seed = batch * self.PER_BATCH + run
            m = mem_new(build_topology(2, 1, 1, 2), {"counter": 0})
            procs = ["p0", "p1", "p2", "p3"]
            lock = bakery_lock_create(m, procs)
            monitor = MutexMonitor()
            result = Scheduler(seed).run([_increments(m, lock, monitor, p, 1) for p in procs])
            assert result.completed, seed
            assert monitor.violations == 0, seed
            assert m.memory_value("counter") == 4, seed

    def test_without_read_flushes_over_seeds(self):
        """Test random schedules find overlapping holders once read-side flushes are gone."""
        found = None
        for seed in range(10_000):
            m = mem_new(build_topology(2, 1, 1, 2), {"counter": 0})
            procs = ["p0", "p1", "p2", "p3"]
            lock = bakery_lock_create(m, procs, read_side_flush=False)
            monitor = MutexMonitor()
            Scheduler(seed, max_steps=20_000).run(
                [_increments(m, lock, monitor, p, 2) for p in procs], raise_on_deadlock=False
            )
            if monitor.violations > 0:
                found = seed
                break
        assert found is not None

    def test_without_read_flushes(self):
        """Test a stale cached ticket lets a second holder in."""
        m = mem_new(build_topology(2))
        lock = bakery_lock_create(m, ["p0", "p1"], read_side_flush=False)
        m.read("p1", "bakery.number0")
        run_sync(bakery_acquire(lock, "p0"))
        run_sync(bakery_acquire(lock, "p1"))
        assert lock.holders == {"p0", "p1"}

    def test_with_read_flushes(self):
        """Test the same warm cache is harmless when reads flush first."""
        m = mem_new(build_topology(2))
        lock = bakery_lock_create(m, ["p0", "p1"])
        m.read("p1", "bakery.number0")
        run_sync(bakery_acquire(lock, "p0"))
        waiter = bakery_acquire(lock, "p1")
        result = Scheduler(0, max_steps=2_000).run([waiter], raise_on_deadlock=False)
        assert not result.completed
        assert lock.holders == {"p0"}


class TestPipeline:
    """Test pipelines end to end."""

    @pytest.mark.parametrize("seed", range(3))
    def test_three_stages(self, seed):
        """Test every item passes every stage once."""
        m = mem_new(build_topology(3, 1, 1, 2))
        result = Pipeline(m, ["n0", "n1", "n2"], items=1_000, capacity=8).run(seed=seed)
        assert result.completed
        assert sorted(result.sink) == list(range(1_000))
        assert set(result.values.values()) == {3}

    def test_warm_caches_are_harmless_with_invalidation(self):
        """Test warm stage caches do not matter when receivers flush."""
        m = mem_new(build_topology(3, 1, 1, 1))
        pipe = Pipeline(m, ["n0", "n1", "n2"], items=40, capacity=4)
        pipe.warm_caches()
        result = pipe.run(seed=5)
        assert set(result.values.values()) == {3}

    def test_warm_caches_without_invalidation(self):
        """Test warm stage caches lose updates when receivers skip the flush."""
        m = mem_new(build_topology(3, 1, 1, 1))
        pipe = Pipeline(m, ["n0", "n1", "n2"], items=40, capacity=4, invalidate_on_receive=False)
        pipe.warm_caches()
        result = pipe.run(seed=5)
        assert result.completed
        assert all(v != 3 for v in result.values.values())
