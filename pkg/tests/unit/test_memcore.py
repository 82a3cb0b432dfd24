"""
Unit tests for the memory simulator.

Tests cover:
- Line state transitions (read miss, write-allocate, flush, flush_all)
- Cross-node staleness and intra-node sharing
- Node-local atomics (CAS, FAA, wrap-around)
- Cache-bypassing accesses
- Trace recording (init prefix, edges, observers)
- System evictions (injected and random)
- Input validation
"""
import pytest

from fedcoh.exceptions import (
    DuplicateLocationError,
    UnknownLocationError,
    UnknownProcessorError,
    ValueRangeError,
)
from fedcoh.services.memcore import (
    INIT_PROC,
    MASK64,
    SYSTEM_PROC,
    EvictionConfig,
    LineKind,
    OpKind,
    RmwKind,
    mem_new,
)
from fedcoh.services.topology import build_topology

pytestmark = [pytest.mark.unit, pytest.mark.memcore]


class TestLineStates:
    """Test per-node line transitions."""

    def test_read_miss_loads_clean(self, memory):
        """Test a read miss caches the memory value as Clean."""
        assert memory.read("p0", "x") == 0
        state = memory.cached_state("n0", "x")
        assert state.kind is LineKind.CLEAN
        assert state.value == 0

    def test_write_allocates_dirty(self, memory):
        """Test a write leaves memory untouched."""
        memory.write("p0", "x", 5)
        assert memory.cached_state("n0", "x").kind is LineKind.DIRTY
        assert memory.memory_value("x") == 0

    def test_flush_writes_back_and_invalidates(self, memory):
        """Test flushing a Dirty line updates memory."""
        memory.write("p0", "x", 5)
        memory.flush_line("p0", "x")
        assert memory.memory_value("x") == 5
        assert memory.cached_state("n0", "x").kind is LineKind.INVALID

    def test_flush_invalidates_clean_line(self, memory):
        """Test flushing a Clean line drops it."""
        memory.read("p0", "x")
        memory.flush_line("p0", "x")
        assert not memory.cached_state("n0", "x").cached

    def test_flush_all_counts_cached_lines(self, two_nodes):
        """Test flush_all flushes exactly the node's cached lines."""
        m = mem_new(two_nodes, {"x": 0, "y": 0, "z": 0})
        m.write("p0", "x", 1)
        m.read("p0", "y")
        m.read("p1", "z")
        assert m.cached_locations("n0") == ["x", "y"]
        assert m.flush_all("p0") == 2
        assert m.cached_locations("n0") == []
        assert m.cached_locations("n1") == ["z"]
        assert m.memory_value("x") == 1


class TestVisibility:
    """Test the federated visibility rules."""

    def test_cross_node_stale_read(self, memory):
        """Test a cached copy survives another node's write and flush."""
        memory.read("p1", "x")
        memory.write("p0", "x", 7)
        memory.flush_line("p0", "x")
        assert memory.read("p1", "x") == 0

    def test_reader_flush_sees_new_value(self, memory):
        """Test invalidating the reader's line exposes the flushed value."""
        memory.read("p1", "x")
        memory.write("p0", "x", 7)
        memory.flush_line("p0", "x")
        memory.flush_line("p1", "x")
        assert memory.read("p1", "x") == 7

    def test_unflushed_write_invisible_across_nodes(self, memory):
        """Test a Dirty line is private to its node."""
        memory.write("p0", "x", 7)
        assert memory.read("p1", "x") == 0

    def test_intra_node_sharing(self, shared_memory):
        """Test processors of one node see each other's writes without flushes."""
        shared_memory.write("p0", "x", 9)
        assert shared_memory.read("p1", "x") == 9


class TestAtomics:
    """Test node-local read-modify-write operations."""

    def test_cas_success_and_failure(self, memory):
        """Test CAS reports success and the observed value."""
        assert memory.atomic_cas("p0", "x", 0, 4) == (True, 0)
        assert memory.atomic_cas("p0", "x", 0, 6) == (False, 4)
        assert memory.read("p0", "x") == 4

    def test_cross_node_cas_both_succeed(self, memory):
        """Test CAS is not atomic across nodes."""
        ok0, _ = memory.atomic_cas("p0", "x", 0, 1)
        ok1, _ = memory.atomic_cas("p1", "x", 0, 2)
        assert ok0 and ok1

    def test_intra_node_faa(self, shared_memory):
        """Test FAA is atomic among a node's processors."""
        assert shared_memory.atomic_faa("p0", "x", 1) == 0
        assert shared_memory.atomic_faa("p1", "x", 1) == 1
        shared_memory.flush_all("p0")
        assert shared_memory.memory_value("x") == 2

    def test_cross_node_faa_loses_update(self, memory):
        """Test two nodes' increments collapse into one after both flush."""
        memory.atomic_faa("p0", "x", 1)
        memory.atomic_faa("p1", "x", 1)
        memory.flush_line("p0", "x")
        memory.flush_line("p1", "x")
        assert memory.memory_value("x") == 1

    def test_faa_wraps(self, memory):
        """Test FAA adds modulo 2**64."""
        memory.write("p0", "x", MASK64)
        assert memory.atomic_faa("p0", "x", 1) == MASK64
        assert memory.read("p0", "x") == 0


class TestBypass:
    """Test cache-bypassing accesses."""

    def test_read_bypass_writes_back_own_line(self, memory):
        """Test read_bypass flushes the reader's own Dirty line first."""
        memory.write("p0", "x", 3)
        assert memory.read_bypass("p0", "x") == 3
        assert not memory.cached_state("n0", "x").cached
        ops = [e.op for e in memory.take_trace().events[-2:]]
        assert ops == [OpKind.FLUSH, OpKind.READ]

    def test_read_bypass_ignores_other_node_cache(self, memory):
        """Test read_bypass returns memory, not another node's Dirty line."""
        memory.write("p1", "x", 3)
        assert memory.read_bypass("p0", "x") == 0

    def test_write_bypass_leaves_other_copies(self, memory):
        """Test write_bypass updates memory but not other nodes' lines."""
        memory.read("p1", "x")
        memory.write_bypass("p0", "x", 8)
        assert memory.memory_value("x") == 8
        assert memory.read("p1", "x") == 0
        ops = [e.op for e in memory.take_trace().events[-3:-1]]
        assert ops == [OpKind.WRITE, OpKind.FLUSH]


class TestTrace:
    """Test trace recording."""

    def test_init_prefix(self, two_nodes):
        """Test every initial value is recorded as a write then a flush by init."""
        m = mem_new(two_nodes, {"x": 0, "y": 1})
        events = m.take_trace().events
        assert [(e.proc, e.op, e.loc) for e in events] == [
            (INIT_PROC, OpKind.WRITE, "x"),
            (INIT_PROC, OpKind.FLUSH, "x"),
            (INIT_PROC, OpKind.WRITE, "y"),
            (INIT_PROC, OpKind.FLUSH, "y"),
        ]
        assert events[2].value == 1

    def test_seqs_are_issue_order(self, memory):
        """Test seqs count events in issue order."""
        memory.read("p0", "x")
        memory.write("p1", "x", 1)
        trace = memory.take_trace()
        assert [e.seq for e in trace.events] == list(range(len(trace)))
        assert memory.last_seq("p1") == 3
        assert memory.last_seq("p0") == 2

    def test_rmw_fields(self, memory):
        """Test CAS and FAA events carry their operands."""
        memory.atomic_cas("p0", "x", 0, 2)
        memory.atomic_faa("p0", "x", 3)
        cas, faa = memory.take_trace().events[-2:]
        assert cas.rmw is RmwKind.CAS and cas.success and cas.observed == 0 and cas.new == 2
        assert faa.rmw is RmwKind.FAA and faa.old == 2 and faa.delta == 3
        assert faa.written_value == 5

    def test_order_after_attaches_to_next_event(self, memory):
        """Test an edge lands on the processor's next recorded event only."""
        memory.write("p0", "x", 1)
        memory.order_after("p1", memory.last_seq("p0"))
        memory.read("p1", "x")
        memory.read("p1", "x")
        first, second = memory.take_trace().events[-2:]
        assert first.after == (2,)
        assert second.after == ()

    def test_order_after_unrecorded_seq(self, memory):
        """Test edges must point at recorded events."""
        with pytest.raises(ValueError):
            memory.order_after("p1", 99)

    def test_observer_sees_every_event(self, memory, mocker):
        """Test observers are called once per recorded event."""
        observer = mocker.Mock()
        memory.add_observer(observer)
        memory.write("p0", "x", 1)
        memory.flush_line("p0", "x")
        assert observer.call_count == 2
        assert observer.call_args_list[0].args[0].op is OpKind.WRITE

    def test_allocate_records_init_pair(self, memory):
        """Test run-time allocation records the same prefix."""
        memory.allocate("y", 4)
        write, flush = memory.take_trace().events[-2:]
        assert write.is_init and write.value == 4 and write.loc == "y"
        assert flush.is_init and flush.op is OpKind.FLUSH
        assert memory.memory_value("y") == 4


class TestEvictions:
    """Test system-inserted flushes."""

    def test_inject_eviction(self, memory):
        """Test an injected eviction writes back and is recorded by sys."""
        memory.write("p0", "x", 6)
        memory.inject_eviction("n0", "x")
        assert memory.memory_value("x") == 6
        last = memory.take_trace().events[-1]
        assert last.proc == SYSTEM_PROC and last.op is OpKind.EVICT and last.node == "n0"

    def test_random_eviction_at_full_rate(self):
        """Test rate 1.0 evicts the single cached line after a write."""
        m = mem_new(build_topology(1), {"x": 0}, EvictionConfig("random", 1.0, seed=3))
        m.write("p0", "x", 7)
        assert m.memory_value("x") == 7
        assert m.take_trace().events[-1].op is OpKind.EVICT

    def test_random_eviction_deterministic(self):
        """Test equal seeds evict identically."""
        def run():
            m = mem_new(build_topology(2, 1, 1, 2), {"x": 0, "y": 0}, EvictionConfig("random", 0.5, seed=11))
            for i in range(20):
                m.write(f"p{i % 4}", "x" if i % 3 else "y", i)
            return [(e.op, e.node, e.loc) for e in m.take_trace().events]

        assert run() == run()

    @pytest.mark.parametrize("mode,rate", [("sometimes", 0.1), ("random", 1.5), ("random", -0.1)])
    def test_invalid_config(self, mode, rate):
        """Test eviction config validation."""
        with pytest.raises(ValueError):
            EvictionConfig(mode, rate)


class TestValidation:
    """Test error handling."""

    def test_duplicate_location(self, two_nodes):
        """Test initializing a location twice fails."""
        with pytest.raises(DuplicateLocationError):
            mem_new(two_nodes, [("x", 0), ("x", 1)])

    def test_duplicate_allocate(self, memory):
        """Test allocating an existing location fails."""
        with pytest.raises(DuplicateLocationError):
            memory.allocate("x", 1)

    def test_unknown_location(self, memory):
        """Test accessing an unknown location fails."""
        with pytest.raises(UnknownLocationError):
            memory.read("p0", "nope")

    def test_unknown_processor(self, memory):
        """Test an unknown processor fails."""
        with pytest.raises(UnknownProcessorError):
            memory.write("p9", "x", 1)

    @pytest.mark.parametrize("value", [-1, 1 << 64, True])
    def test_value_range(self, memory, value):
        """Test values must be unsigned 64-bit integers."""
        with pytest.raises(ValueRangeError):
            memory.write("p0", "x", value)
