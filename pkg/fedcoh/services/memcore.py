"""
Operational simulator of disaggregated memory with federated coherence.

This module provides:
- A global memory plus one shared cache per node (Invalid / Clean / Dirty lines)
- Reads, writes, per-line and node-wide flushes, node-local atomics (CAS, FAA)
- Cache-bypassing accesses and system-inserted evictions
- A trace recorder with optional cross-processor ordering edges

Hardware coherence holds among the processors of one node only. Nothing a
node does invalidates another node's cached copy; visibility across nodes
comes from flushes (write-back plus invalidate) on both sides.
"""
import logging
import random
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from fedcoh.exceptions import (
    DuplicateLocationError,
    UnknownLocationError,
    ValueRangeError,
)
from fedcoh.services.topology import NodeId, ProcId, Topology, node_map
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)

MASK64 = (1 << 64) - 1

# Reserved pseudo-processor that writes and flushes initial values
INIT_PROC = "init"
INIT_NODE = "init"

# Pseudo-processor for system-inserted evictions
SYSTEM_PROC = "sys"


class LineKind(str, Enum):
    """Cache line state of one (node, location)."""
    INVALID = "invalid"
    CLEAN = "clean"
    DIRTY = "dirty"


@dataclass(frozen=True)
class LineState:
    kind: LineKind
    value: Optional[int] = None

    @property
    def cached(self) -> bool:
        return self.kind is not LineKind.INVALID


INVALID = LineState(LineKind.INVALID)


def clean(value: int) -> LineState:
    return LineState(LineKind.CLEAN, value)


def dirty(value: int) -> LineState:
    return LineState(LineKind.DIRTY, value)


class OpKind(str, Enum):
    """
    Recorded operation kinds.

    - **write**: store of a full line into the node cache
    - **read**: load, value is the returned value
    - **flush**: write-back plus invalidate of one line by a processor
    - **rmw**: node-local atomic read-modify-write (CAS or FAA)
    - **evict**: flush inserted by the system
    """
    WRITE = "write"
    READ = "read"
    FLUSH = "flush"
    RMW = "rmw"
    EVICT = "evict"


class RmwKind(str, Enum):
    CAS = "cas"
    FAA = "faa"


@dataclass(frozen=True)
class Event:
    """One recorded operation on one location."""
    seq: int
    proc: ProcId
    node: NodeId
    op: OpKind
    loc: str
    value: Optional[int] = None
    rmw: Optional[RmwKind] = None
    expected: Optional[int] = None
    new: Optional[int] = None
    success: Optional[bool] = None
    observed: Optional[int] = None
    delta: Optional[int] = None
    old: Optional[int] = None
    after: Tuple[int, ...] = ()

    @property
    def is_flush(self) -> bool:
        return self.op in (OpKind.FLUSH, OpKind.EVICT)

    @property
    def is_init(self) -> bool:
        return self.proc == INIT_PROC

    @property
    def read_value(self) -> Optional[int]:
        """Value observed by the event, None if it observes nothing."""
        if self.op is OpKind.READ:
            return self.value
        if self.op is OpKind.RMW:
            return self.observed if self.rmw is RmwKind.CAS else self.old
        return None

    @property
    def written_value(self) -> Optional[int]:
        """Value stored by the event, None if it stores nothing."""
        if self.op is OpKind.WRITE:
            return self.value
        if self.op is OpKind.RMW:
            if self.rmw is RmwKind.CAS:
                return self.new if self.success else None
            return (self.old + self.delta) & MASK64
        return None


@dataclass
class Trace:
    """Recorded events in issue order plus the processor to node map."""
    events: List[Event]
    node_map: Dict[ProcId, NodeId] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.events)

    def locations(self) -> List[str]:
        seen: Dict[str, None] = {}
        for e in self.events:
            seen.setdefault(e.loc, None)
        return list(seen)


@dataclass(frozen=True)
class EvictionConfig:
    """
    System eviction policy.

    With mode "random", after each processor operation the system evicts one
    cached line of a randomly chosen node with probability `rate`.
    """
    mode: str = "off"
    rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("off", "random"):
            raise ValueError(f"Unknown eviction mode: {self.mode}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"Eviction rate must be within [0, 1], got {self.rate}")

    @property
    def enabled(self) -> bool:
        return self.mode == "random" and self.rate > 0.0


EVICTION_OFF = EvictionConfig()

Observer = Callable[[Event], None]


def _check_value(value: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= MASK64:
        raise ValueRangeError(value)
    return value


class MemorySystem:
    """
    Global memory plus per-node shared caches, with a trace recorder.

    Safe to share across threads that own disjoint processors: transitions
    on one location are serialized by a per-location lock, and trace appends
    happen under that lock so the recorded order matches the effect order.
    """

    def __init__(
        self,
        topology: Topology,
        init: Union[Mapping[str, int], Iterable[Tuple[str, int]], None] = None,
        eviction: Optional[EvictionConfig] = None,
    ):
        self.topology = topology
        self.eviction = eviction or EVICTION_OFF
        self._node_of = node_map(topology)
        self._memory: Dict[str, int] = {}
        self._lines: Dict[Tuple[NodeId, str], LineState] = {}
        self._cached: Dict[NodeId, Set[str]] = defaultdict(set)
        self._loc_locks: Dict[str, threading.Lock] = {}
        self._alloc_lock = threading.Lock()
        self._trace_lock = threading.Lock()
        self._index_lock = threading.Lock()
        self._evict_lock = threading.Lock()
        self._evict_rng = random.Random(self.eviction.seed)
        self._events: List[Event] = []
        self._pending_edges: Dict[ProcId, List[int]] = defaultdict(list)
        self._last_seq: Dict[ProcId, int] = {}
        self._observers: List[Observer] = []

        pairs = list(init.items()) if isinstance(init, Mapping) else list(init or [])
        seen: Set[str] = set()
        for loc, _ in pairs:
            if loc in seen:
                raise DuplicateLocationError(loc)
            seen.add(loc)
        for loc, value in pairs:
            self.allocate(loc, value)

    # ------------------------------------------------------------------
    # Allocation and introspection
    # ------------------------------------------------------------------

    def allocate(self, loc: str, value: int = 0) -> None:
        """
        Add a location holding `value`, recording the init write and flush.

        Raises:
            DuplicateLocationError: If the location exists
            ValueRangeError: If value is not a 64-bit unsigned word
        """
        _check_value(value)
        with self._alloc_lock:
            if loc in self._loc_locks:
                raise DuplicateLocationError(loc)
            lock = threading.Lock()
            with lock:
                self._loc_locks[loc] = lock
                self._memory[loc] = value
                self._record(INIT_PROC, INIT_NODE, OpKind.WRITE, loc, value=value)
                self._record(INIT_PROC, INIT_NODE, OpKind.FLUSH, loc)

    def has_location(self, loc: str) -> bool:
        return loc in self._loc_locks

    @property
    def locations(self) -> List[str]:
        return list(self._loc_locks)

    def node_of(self, p: ProcId) -> NodeId:
        """Node of a processor, raising for unknown processors."""
        return self.topology.placement(p)[0]

    def memory_value(self, loc: str) -> int:
        self._lock_for(loc)
        return self._memory[loc]

    def cached_state(self, node: NodeId, loc: str) -> LineState:
        self._lock_for(loc)
        return self._lines.get((node, loc), INVALID)

    def cached_locations(self, node: NodeId) -> List[str]:
        with self._index_lock:
            return sorted(self._cached.get(node, ()))

    def last_seq(self, p: ProcId) -> Optional[int]:
        """Latest recorded seq issued by processor p."""
        with self._trace_lock:
            return self._last_seq.get(p)

    def order_after(self, p: ProcId, seq: int) -> None:
        """Attach a happens-before edge from `seq` to p's next recorded event."""
        with self._trace_lock:
            if seq >= len(self._events):
                raise ValueError(f"Edge source {seq} has not been recorded")
            self._pending_edges[p].append(seq)

    def add_observer(self, fn: Observer) -> None:
        """Register a callback invoked with every recorded event."""
        self._observers.append(fn)

    def take_trace(self) -> Trace:
        """All recorded events in issue order."""
        with self._trace_lock:
            events = list(self._events)
        nm = dict(self._node_of)
        nm[INIT_PROC] = INIT_NODE
        return Trace(events=events, node_map=nm)

    # ------------------------------------------------------------------
    # Processor operations
    # ------------------------------------------------------------------

    def read(self, p: ProcId, loc: str) -> int:
        """
        Read through node(p)'s shared cache, loading memory on a miss.

        Raises:
            UnknownLocationError: If loc was never initialized
        """
        node = self.node_of(p)
        with self._lock_for(loc):
            value = self._load(node, loc)
            self._record(p, node, OpKind.READ, loc, value=value)
        self._maybe_evict()
        return value

    def write(self, p: ProcId, loc: str, value: int) -> None:
        """Write-allocate a full line as Dirty; memory is untouched."""
        _check_value(value)
        node = self.node_of(p)
        with self._lock_for(loc):
            self._set_line(node, loc, dirty(value))
            self._record(p, node, OpKind.WRITE, loc, value=value)
        self._maybe_evict()

    def flush_line(self, p: ProcId, loc: str) -> None:
        """Write back node(p)'s line if Dirty, then invalidate it."""
        node = self.node_of(p)
        with self._lock_for(loc):
            self._writeback_invalidate(node, loc)
            self._record(p, node, OpKind.FLUSH, loc)
        self._maybe_evict()

    def flush_all(self, p: ProcId) -> int:
        """
        Flush every line cached by node(p).

        Returns:
            Number of flushed locations (one Flush event each)
        """
        node = self.node_of(p)
        flushed = 0
        for loc in self.cached_locations(node):
            with self._lock_for(loc):
                if not self._lines.get((node, loc), INVALID).cached:
                    continue
                self._writeback_invalidate(node, loc)
                self._record(p, node, OpKind.FLUSH, loc)
                flushed += 1
        self._maybe_evict()
        return flushed

    def atomic_cas(self, p: ProcId, loc: str, expected: int, new: int) -> Tuple[bool, int]:
        """
        Compare-and-swap on node(p)'s line, atomic among node(p) only.

        Returns:
            (success, observed value)
        """
        _check_value(expected)
        _check_value(new)
        node = self.node_of(p)
        with self._lock_for(loc):
            observed = self._load(node, loc)
            success = observed == expected
            if success:
                self._set_line(node, loc, dirty(new))
            self._record(
                p, node, OpKind.RMW, loc,
                rmw=RmwKind.CAS, expected=expected, new=new, success=success, observed=observed,
            )
        self._maybe_evict()
        return success, observed

    def atomic_faa(self, p: ProcId, loc: str, delta: int) -> int:
        """
        Fetch-and-add (mod 2**64) on node(p)'s line, atomic among node(p) only.

        Returns:
            The value before the addition
        """
        _check_value(delta)
        node = self.node_of(p)
        with self._lock_for(loc):
            old = self._load(node, loc)
            self._set_line(node, loc, dirty((old + delta) & MASK64))
            self._record(p, node, OpKind.RMW, loc, rmw=RmwKind.FAA, delta=delta, old=old)
        self._maybe_evict()
        return old

    def read_bypass(self, p: ProcId, loc: str) -> int:
        """
        Read memory directly, recorded as Flush then Read.

        node(p)'s line is written back if Dirty and left Invalid so later
        cached reads cannot resurrect stale data.
        """
        node = self.node_of(p)
        with self._lock_for(loc):
            self._writeback_invalidate(node, loc)
            self._record(p, node, OpKind.FLUSH, loc)
            value = self._memory[loc]
            self._record(p, node, OpKind.READ, loc, value=value)
        self._maybe_evict()
        return value

    def write_bypass(self, p: ProcId, loc: str, value: int) -> None:
        """
        Write memory directly, recorded as Write then Flush.

        Other nodes' cached copies are left as they are.
        """
        _check_value(value)
        node = self.node_of(p)
        with self._lock_for(loc):
            self._memory[loc] = value
            self._set_line(node, loc, INVALID)
            self._record(p, node, OpKind.WRITE, loc, value=value)
            self._record(p, node, OpKind.FLUSH, loc)
        self._maybe_evict()

    def inject_eviction(self, node: NodeId, loc: str) -> None:
        """Flush one line of `node` on behalf of the system."""
        with self._lock_for(loc):
            self._evict(node, loc)

    # ------------------------------------------------------------------
    # Internals
    # ------------------------------------------------------------------

    def _lock_for(self, loc: str) -> threading.Lock:
        try:
            return self._loc_locks[loc]
        except KeyError:
            raise UnknownLocationError(loc) from None

    def _set_line(self, node: NodeId, loc: str, state: LineState) -> None:
        key = (node, loc)
        with self._index_lock:
            if state.cached:
                self._lines[key] = state
                self._cached[node].add(loc)
            else:
                self._lines.pop(key, None)
                self._cached[node].discard(loc)

    def _load(self, node: NodeId, loc: str) -> int:
        state = self._lines.get((node, loc), INVALID)
        if state.cached:
            return state.value
        value = self._memory[loc]
        self._set_line(node, loc, clean(value))
        return value

    def _writeback_invalidate(self, node: NodeId, loc: str) -> None:
        state = self._lines.get((node, loc), INVALID)
        if state.kind is LineKind.DIRTY:
            self._memory[loc] = state.value
        self._set_line(node, loc, INVALID)

    def _evict(self, node: NodeId, loc: str) -> None:
        self._writeback_invalidate(node, loc)
        self._record(SYSTEM_PROC, node, OpKind.EVICT, loc)

    def _maybe_evict(self) -> None:
        if not self.eviction.enabled:
            return
        with self._evict_lock:
            if self._evict_rng.random() >= self.eviction.rate:
                return
            node = self._evict_rng.choice(self.topology.node_ids)
            candidates = self.cached_locations(node)
            if not candidates:
                return
            loc = self._evict_rng.choice(candidates)
            with self._lock_for(loc):
                if self._lines.get((node, loc), INVALID).cached:
                    self._evict(node, loc)
                    log_with_context(logger, logging.DEBUG, "Evicted line", location=loc, node=node)

    def _record(self, proc: ProcId, node: NodeId, op: OpKind, loc: str, **fields) -> Event:
        with self._trace_lock:
            seq = len(self._events)
            edges = tuple(self._pending_edges.pop(proc, ()))
            event = Event(seq=seq, proc=proc, node=node, op=op, loc=loc, after=edges, **fields)
            self._events.append(event)
            self._last_seq[proc] = seq
        for observer in self._observers:
            observer(event)
        return event


def mem_new(
    t: Topology,
    init: Union[Mapping[str, int], Sequence[Tuple[str, int]], None] = None,
    eviction: Optional[EvictionConfig] = None,
) -> MemorySystem:
    """
    Create a memory system whose trace starts with init write+flush pairs.

    Args:
        t: Topology
        init: Initial values, as a mapping or (location, value) pairs
        eviction: Eviction policy (off by default)

    Returns:
        MemorySystem

    Raises:
        DuplicateLocationError: If a location is initialized twice
    """
    return MemorySystem(t, init, eviction)
