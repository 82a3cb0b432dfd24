"""
Runtime protocol monitors.

Monitors observe recorded memory events (or explicit enter/exit calls) and
collect violations instead of changing behavior; in strict mode they raise.
"""
import logging
import threading
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Set

from fedcoh.config.settings import get_settings
from fedcoh.exceptions import OwnershipError
from fedcoh.services.layout import OWNER_BIT, USED_BIT, meta_of
from fedcoh.services.memcore import Event, MemorySystem, OpKind
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)


@dataclass
class Violation:
    seq: int
    loc: str
    detail: str


class SlotProtocolMonitor:
    """
    Checks slot metadata transitions by role.

    Producers may only claim (CAS to owner=producer, used=1) and publish
    (write owner=consumer, used=1); consumers may only take (CAS from
    owner=consumer, used=1 to used=0) and return (write owner=producer,
    used=0).
    """

    def __init__(self, m: MemorySystem, word0_locations: Iterable[str], producer_node: str,
                 consumer_node: str):
        self.locations: Set[str] = set(word0_locations)
        self.producer_node = producer_node
        self.consumer_node = consumer_node
        self.violations: List[Violation] = []
        m.add_observer(self)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __call__(self, e: Event) -> None:
        if e.loc not in self.locations or e.is_init or e.is_flush or e.op is OpKind.READ:
            return
        if e.node == self.producer_node:
            problem = self._producer(e)
        elif e.node == self.consumer_node:
            problem = self._consumer(e)
        else:
            problem = f"write by third node {e.node}"
        if problem:
            self.violations.append(Violation(e.seq, e.loc, problem))
            log_with_context(logger, logging.WARNING, "Slot protocol violation",
                             location=e.loc, node=e.node, detail=problem)

    def _producer(self, e: Event) -> str:
        if e.op is OpKind.RMW:
            if not e.success:
                return ""
            before, after = meta_of(e.observed), meta_of(e.new)
            if before == 0 and after == USED_BIT:
                return ""
            return f"producer CAS {before:#x}->{after:#x}"
        if e.op is OpKind.WRITE and meta_of(e.value) == OWNER_BIT | USED_BIT:
            return ""
        return f"producer wrote metadata {meta_of(e.value or 0):#x}"

    def _consumer(self, e: Event) -> str:
        if e.op is OpKind.RMW:
            if not e.success:
                return ""
            before, after = meta_of(e.observed), meta_of(e.new)
            if before == OWNER_BIT | USED_BIT and after == OWNER_BIT:
                return ""
            return f"consumer CAS {before:#x}->{after:#x}"
        if e.op is OpKind.WRITE and meta_of(e.value) == 0:
            return ""
        return f"consumer wrote metadata {meta_of(e.value or 0):#x}"


class OwnershipMonitor:
    """
    Flags accesses to owned locations by processors outside the owner node.

    The descriptor's current owner is read at every event. Strict mode
    (DEBUG by default) raises on the first violation.
    """

    def __init__(self, m: MemorySystem, descriptor, strict: Optional[bool] = None):
        self.descriptor = descriptor
        self.locations = set(descriptor.granularity)
        self.strict = get_settings().DEBUG if strict is None else strict
        self.violations: List[Violation] = []
        m.add_observer(self)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __call__(self, e: Event) -> None:
        if e.loc not in self.locations or e.is_init or e.op is OpKind.EVICT:
            return
        owner = self.descriptor.current_owner
        if e.node == owner:
            return
        violation = Violation(e.seq, e.loc, f"{e.proc}@{e.node} touched data owned by {owner}")
        self.violations.append(violation)
        log_with_context(logger, logging.WARNING, "Ownership violation",
                         location=e.loc, proc=e.proc, node=e.node, owner=owner)
        if self.strict:
            raise OwnershipError(violation.detail, owner=owner)


@dataclass
class MutexMonitor:
    """Counts overlapping critical sections."""
    inside: Set[str] = field(default_factory=set)
    violations: int = 0
    entries: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def enter(self, p: str) -> None:
        with self._lock:
            if self.inside:
                self.violations += 1
            self.inside.add(p)
            self.entries += 1

    def exit(self, p: str) -> None:
        with self._lock:
            self.inside.discard(p)
