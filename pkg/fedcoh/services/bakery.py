"""
Cross-node mutual exclusion without cross-node atomics.

Lamport's bakery algorithm over plain reads and writes. Each participant
owns a `choosing` and a `number` location. Every write is followed by a
flush of its line and every read of another participant's variable is
preceded by one, so each access reaches disaggregated memory.
"""
import logging
import threading
from typing import Dict, Iterable, List, Set, Tuple

from fedcoh.exceptions import LockUsageError
from fedcoh.services.memcore import MemorySystem
from fedcoh.services.scheduler import SimThread, schedule
from fedcoh.services.topology import ProcId
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)


class BakeryLock:
    """
    A bakery lock over a fixed participant set.

    `read_side_flush=False` drops the flush before reads; it exists to show
    that those flushes are required.
    """

    def __init__(self, m: MemorySystem, procs: Iterable[ProcId], name: str = "bakery",
                 read_side_flush: bool = True):
        self.m = m
        self.name = name
        self.procs: List[ProcId] = list(procs)
        if not self.procs:
            raise LockUsageError("A bakery lock needs at least one participant")
        if len(set(self.procs)) != len(self.procs):
            raise LockUsageError("Duplicate bakery participant")
        for p in self.procs:
            m.node_of(p)
        self.read_side_flush = read_side_flush
        self._slots: Dict[ProcId, Tuple[str, str]] = {}
        for i, p in enumerate(self.procs):
            choosing, number = f"{name}.choosing{i}", f"{name}.number{i}"
            m.allocate(choosing, 0)
            m.allocate(number, 0)
            self._slots[p] = (choosing, number)
        self._holders: Set[ProcId] = set()
        self._lock = threading.Lock()

    def _store(self, p: ProcId, loc: str, value: int) -> None:
        self.m.write(p, loc, value)
        self.m.flush_line(p, loc)

    def _load(self, p: ProcId, loc: str) -> int:
        if self.read_side_flush:
            self.m.flush_line(p, loc)
        return self.m.read(p, loc)

    def acquire(self, p: ProcId) -> SimThread[None]:
        """
        Take a ticket and wait for every earlier ticket.

        Raises:
            LockUsageError: If p is not a participant or already holds the lock
        """
        if p not in self._slots:
            raise LockUsageError(f"{p} is not a participant of {self.name}")
        with self._lock:
            if p in self._holders:
                raise LockUsageError(f"{p} already holds {self.name}")
        me = self.procs.index(p)
        choosing, number = self._slots[p]

        self._store(p, choosing, 1)
        yield from schedule()
        highest = 0
        for q in self.procs:
            highest = max(highest, self._load(p, self._slots[q][1]))
            yield from schedule()
        ticket = highest + 1
        self._store(p, number, ticket)
        yield from schedule()
        self._store(p, choosing, 0)
        yield from schedule()

        for j, q in enumerate(self.procs):
            if q == p:
                continue
            other_choosing, other_number = self._slots[q]
            while self._load(p, other_choosing):
                yield from schedule()
            while True:
                theirs = self._load(p, other_number)
                if theirs == 0 or (theirs, j) > (ticket, me):
                    break
                yield from schedule()
        with self._lock:
            self._holders.add(p)

    def release(self, p: ProcId) -> None:
        """
        Raises:
            LockUsageError: If p does not hold the lock
        """
        with self._lock:
            if p not in self._holders:
                raise LockUsageError(f"{p} does not hold {self.name}")
            self._holders.discard(p)
        self._store(p, self._slots[p][1], 0)

    @property
    def holders(self) -> Set[ProcId]:
        with self._lock:
            return set(self._holders)


def bakery_lock_create(m: MemorySystem, procs: Iterable[ProcId], read_side_flush: bool = True,
                       name: str = "bakery") -> BakeryLock:
    return BakeryLock(m, procs, name=name, read_side_flush=read_side_flush)


def bakery_acquire(lock: BakeryLock, p: ProcId) -> SimThread[None]:
    return lock.acquire(p)


def bakery_release(lock: BakeryLock, p: ProcId) -> None:
    lock.release(p)
    log_with_context(logger, logging.DEBUG, "Bakery lock released", proc=p, lock=lock.name)
