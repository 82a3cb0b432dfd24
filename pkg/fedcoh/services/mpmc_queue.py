"""
Multi-producer multi-consumer queue between two nodes.

The ring of slots lives in disaggregated memory. All producers run on one
node and all consumers on another, so claiming a slot with CAS only ever
races processors of the same node, where the shared cache makes CAS
atomic. Ownership of a slot passes between the nodes through its metadata
byte, and each handoff is flushed.

Nodes tell each other about sleep and wakeups over two channels: the
producer node wakes the consumer node when it publishes while the
consumers sleep, and the last consumer core to fall asleep reports how
many slots its node has processed. Producer-side and consumer-side
counters live in node-local memory locations; only the asleep-core
registry and the channels are host-side coordination.
"""
import logging
import struct
import threading
from dataclasses import dataclass
from enum import IntEnum
from types import GeneratorType
from typing import Any, Callable, Dict, List, Optional, Set, Tuple

from fedcoh.config.settings import get_settings
from fedcoh.exceptions import QueueUsageError
from fedcoh.services.channels import Channel, notify_recv, notify_send
from fedcoh.services.layout import (
    LINE_WORDS,
    OWNER_BIT,
    SLOT_PAYLOAD_BYTES,
    USED_BIT,
    meta_of,
    pack_slot,
    unpack_slot,
    with_meta,
)
from fedcoh.services.memcore import MASK64, MemorySystem
from fedcoh.services.scheduler import SimThread, schedule, wait_until
from fedcoh.services.topology import NodeId, ProcId
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)

_MESSAGE = struct.Struct("<BQQ")


class MessageKind(IntEnum):
    WAKE = 1
    ALL_ASLEEP = 2
    CLOSE = 3


class _SlotOutcome(IntEnum):
    TAKEN = 0
    RETRY = 1
    EMPTY = 2


def encode_message(kind: MessageKind, slot: int, count: int) -> bytes:
    return _MESSAGE.pack(int(kind), slot, count)


def decode_message(payload: bytes) -> Tuple[MessageKind, int, int]:
    kind, slot, count = _MESSAGE.unpack(payload)
    return MessageKind(kind), slot, count


@dataclass(frozen=True)
class Slot:
    index: int
    words: Tuple[str, ...]

    @property
    def word0(self) -> str:
        return self.words[0]


@dataclass
class QueueStats:
    published: int = 0
    delivered: int = 0
    notifications: int = 0
    asleep_reports: int = 0
    wake_cycles: int = 0
    queue_full: int = 0


class QueueState:
    """Shared state of one queue; build it with queue_create."""

    def __init__(self, m: MemorySystem, capacity: int, producer_node: NodeId,
                 consumer_node: NodeId, producers: int = 1, name: str = "q"):
        nodes = m.topology.node_ids
        if capacity < 1:
            raise QueueUsageError(f"Queue capacity must be at least 1, got {capacity}")
        if producer_node not in nodes or consumer_node not in nodes:
            raise QueueUsageError(f"Unknown queue node {producer_node!r} or {consumer_node!r}")
        if producer_node == consumer_node:
            raise QueueUsageError("Producers and consumers must run on different nodes")
        if producers < 1:
            raise QueueUsageError("A queue needs at least one producer")

        self.m = m
        self.name = name
        self.capacity = capacity
        self.producer_node = producer_node
        self.consumer_node = consumer_node
        self.slots: List[Slot] = [
            Slot(i, tuple(f"{name}.slot{i}.w{w}" for w in range(LINE_WORDS))) for i in range(capacity)
        ]
        for slot in self.slots:
            for loc in slot.words:
                m.allocate(loc, 0)

        # producer-node locations
        self.published_loc = f"{name}.published"
        self.open_producers_loc = f"{name}.producers"
        self.consumer_asleep_loc = f"{name}.consumer_asleep"
        self.reported_processed_loc = f"{name}.reported_processed"
        self.reported_next_loc = f"{name}.reported_next"
        # consumer-node locations
        self.cursor_loc = f"{name}.cursor"
        self.processed_loc = f"{name}.processed"
        for loc, value in (
            (self.published_loc, 0),
            (self.open_producers_loc, producers),
            (self.consumer_asleep_loc, 1),
            (self.reported_processed_loc, 0),
            (self.reported_next_loc, 0),
            (self.cursor_loc, 0),
            (self.processed_loc, 0),
        ):
            m.allocate(loc, value)

        self.to_consumer = Channel(m, producer_node, consumer_node, name=f"{name}.wake")
        self.to_producer = Channel(m, consumer_node, producer_node, name=f"{name}.asleep")
        self.stats = QueueStats()
        self._producer_cursor: Dict[ProcId, int] = {}
        self._service_lock = threading.Lock()
        # asleep-core registry of the consumer node
        self._registry_lock = threading.Lock()
        self._registered: Set[ProcId] = set()
        self._asleep: Set[ProcId] = set()
        self._wake_epoch = 0
        self._reported = True
        self._closing = False

    @property
    def word0_locations(self) -> List[str]:
        return [s.word0 for s in self.slots]

    @property
    def closed(self) -> bool:
        with self._registry_lock:
            return self._closing

    def require_role(self, p: ProcId, node: NodeId, role: str) -> None:
        if self.m.node_of(p) != node:
            raise QueueUsageError(f"{role} {p} is not on {node}")


def queue_create(m: MemorySystem, capacity: int, producer_node: NodeId, consumer_node: NodeId,
                 producers: int = 1, name: str = "q") -> QueueState:
    """
    Allocate a ring of free slots, flushed to memory.

    `producers` is how many producer processors will call producer_finish;
    the queue closes after the last one does.

    Raises:
        QueueUsageError: For capacity < 1 or producer_node == consumer_node
    """
    q = QueueState(m, capacity, producer_node, consumer_node, producers=producers, name=name)
    log_with_context(logger, logging.DEBUG, "Queue created", queue=name, capacity=capacity,
                     producer_node=producer_node, consumer_node=consumer_node)
    return q


def _as_payload(payload: Any) -> bytes:
    data = payload.encode("utf-8") if isinstance(payload, str) else bytes(payload)
    if len(data) > SLOT_PAYLOAD_BYTES:
        raise QueueUsageError(f"Payload of {len(data)} bytes exceeds {SLOT_PAYLOAD_BYTES}")
    return data


# ----------------------------------------------------------------------
# Producer side
# ----------------------------------------------------------------------


def _service_producer(q: QueueState, p: ProcId, slot: Optional[int] = None) -> None:
    """
    Absorb all-asleep reports, then wake the consumer node if it sleeps
    while published slots are still unprocessed.
    """
    m = q.m
    with q._service_lock:
        while True:
            message = notify_recv(q.to_producer, p, 0.0)
            if message is None:
                break
            _, next_slot, processed = decode_message(message.payload)
            m.write(p, q.consumer_asleep_loc, 1)
            m.write(p, q.reported_processed_loc, processed)
            m.write(p, q.reported_next_loc, next_slot)
            q.stats.asleep_reports += 1

        asleep = m.read(p, q.consumer_asleep_loc)
        published = m.read(p, q.published_loc)
        processed = m.read(p, q.reported_processed_loc)
        if not asleep or published <= processed:
            return
        m.write(p, q.consumer_asleep_loc, 0)
        hint = m.read(p, q.reported_next_loc) if slot is None else slot
        notify_send(q.to_consumer, p, encode_message(MessageKind.WAKE, hint % q.capacity, published))
        q.stats.notifications += 1


def enqueue(q: QueueState, p: ProcId, payload: Any) -> SimThread[Optional[int]]:
    """
    Publish one payload of at most 63 bytes.

    Scans from the slot after p's last claim, wrapping, for a slot owned by
    the producer node with a clear used bit, claims it with CAS, writes
    and flushes the payload words, then hands the slot to the consumer
    node by writing and flushing the metadata word.

    Returns:
        The slot index, or None when every slot is busy (queue full)

    Raises:
        QueueUsageError: If p is not on the producer node or the payload is too large
    """
    q.require_role(p, q.producer_node, "Producer")
    data = _as_payload(payload)
    m = q.m
    start = q._producer_cursor.get(p, 0)
    claimed: Optional[Slot] = None
    for i in range(q.capacity):
        slot = q.slots[(start + i) % q.capacity]
        m.flush_line(p, slot.word0)
        word = m.read(p, slot.word0)
        yield from schedule()
        if meta_of(word) != 0:
            continue
        ok, _ = m.atomic_cas(p, slot.word0, word, with_meta(word, USED_BIT))
        yield from schedule()
        if ok:
            claimed = slot
            break
    if claimed is None:
        q.stats.queue_full += 1
        return None

    q._producer_cursor[p] = (claimed.index + 1) % q.capacity
    words = pack_slot(OWNER_BIT | USED_BIT, data)
    for loc, word in zip(claimed.words[1:], words[1:]):
        m.write(p, loc, word)
    yield from schedule()
    for loc in claimed.words[1:]:
        m.flush_line(p, loc)
    yield from schedule()
    m.write(p, claimed.word0, words[0])
    m.flush_line(p, claimed.word0)
    m.atomic_faa(p, q.published_loc, 1)
    q.stats.published += 1
    _service_producer(q, p, claimed.index)
    yield from schedule()
    return claimed.index


def enqueue_blocking(q: QueueState, p: ProcId, payload: Any) -> SimThread[int]:
    """Enqueue, waiting for consumers to free a slot when the ring is full."""
    while True:
        index = yield from enqueue(q, p, payload)
        if index is not None:
            return index
        _service_producer(q, p)
        yield from schedule()


def producer_finish(q: QueueState, p: ProcId) -> SimThread[None]:
    """
    Declare that p will enqueue nothing more.

    The last producer to finish waits until the consumer node reports
    every published slot processed, then sends the close message.
    """
    q.require_role(p, q.producer_node, "Producer")
    m = q.m
    remaining = m.atomic_faa(p, q.open_producers_loc, MASK64)
    if remaining == 0:
        raise QueueUsageError(f"More producers finished than declared for {q.name}")
    if remaining > 1:
        return
    while True:
        _service_producer(q, p)
        with q._service_lock:
            asleep = m.read(p, q.consumer_asleep_loc)
            done = asleep and m.read(p, q.reported_processed_loc) == m.read(p, q.published_loc)
        if done:
            break
        yield from wait_until(q.to_producer.has_message)
    notify_send(q.to_consumer, p, encode_message(MessageKind.CLOSE, 0, m.read(p, q.published_loc)))
    log_with_context(logger, logging.INFO, "Queue closed", queue=q.name, proc=p,
                     published=q.stats.published, notifications=q.stats.notifications)


# ----------------------------------------------------------------------
# Consumer side
# ----------------------------------------------------------------------


def _try_take(q: QueueState, p: ProcId) -> SimThread[Tuple[_SlotOutcome, Optional[bytes]]]:
    m = q.m
    cursor = m.read(p, q.cursor_loc)
    slot = q.slots[cursor % q.capacity]
    for loc in slot.words:
        m.flush_line(p, loc)
    yield from schedule()
    word = m.read(p, slot.word0)
    yield from schedule()
    meta = meta_of(word)

    if meta == OWNER_BIT | USED_BIT:
        if m.read(p, q.cursor_loc) != cursor:
            return _SlotOutcome.RETRY, None
        ok, _ = m.atomic_cas(p, slot.word0, word, with_meta(word, OWNER_BIT))
        yield from schedule()
        if not ok:
            return _SlotOutcome.RETRY, None
        m.atomic_cas(p, q.cursor_loc, cursor, cursor + 1)
        words = [word] + [m.read(p, loc) for loc in slot.words[1:]]
        _, payload = unpack_slot(words)
        m.atomic_faa(p, q.processed_loc, 1)
        yield from schedule()
        # return the slot to the producer node before probing further
        m.write(p, slot.word0, 0)
        m.flush_line(p, slot.word0)
        q.stats.delivered += 1
        return _SlotOutcome.TAKEN, payload

    if meta == OWNER_BIT:
        # another core won this slot and has not returned it yet
        m.atomic_cas(p, q.cursor_loc, cursor, cursor + 1)
        yield from schedule()
        return _SlotOutcome.RETRY, None

    if m.read(p, q.cursor_loc) != cursor:
        return _SlotOutcome.RETRY, None
    return _SlotOutcome.EMPTY, None


def _register(q: QueueState, p: ProcId) -> int:
    with q._registry_lock:
        q._registered.add(p)
        q._asleep.add(p)
        return q._wake_epoch


def _wake(q: QueueState, p: ProcId, epoch: int) -> Tuple[int, bool]:
    """Leave the asleep set; receive the wake message if this core is first."""
    if q._wake_epoch == epoch:
        message = notify_recv(q.to_consumer, p, 0.0)
        if message is not None:
            kind, _, _ = decode_message(message.payload)
            with q._registry_lock:
                q._wake_epoch += 1
                q._asleep.clear()
                q._reported = False
                if kind is MessageKind.CLOSE:
                    q._closing = True
                else:
                    q.stats.wake_cycles += 1
    with q._registry_lock:
        q._asleep.discard(p)
        return q._wake_epoch, q._closing


def _sleep(q: QueueState, p: ProcId) -> None:
    """Join the asleep set; the last core in reports to the producer node."""
    m = q.m
    next_slot = m.read(p, q.cursor_loc) % q.capacity
    processed = m.read(p, q.processed_loc)
    with q._registry_lock:
        q._asleep.add(p)
        report = q._asleep >= q._registered and not q._reported and not q._closing
        if report:
            q._reported = True
    if report:
        notify_send(q.to_producer, p, encode_message(MessageKind.ALL_ASLEEP, next_slot, processed))
        log_with_context(logger, logging.DEBUG, "Consumer node asleep", queue=q.name, proc=p,
                         processed=processed)


def dequeue_loop(q: QueueState, p: ProcId, handler: Callable[[bytes], Any]) -> SimThread[int]:
    """
    Serve the queue as one consumer core until the queue is closed.

    `handler` receives each taken 63-byte payload; it may be a plain
    function or return a generator, which is run to completion in place.

    Returns:
        The number of payloads this core took

    Raises:
        QueueUsageError: If p is not on the consumer node
    """
    q.require_role(p, q.consumer_node, "Consumer")
    epoch = _register(q, p)
    taken = 0
    while True:
        # a core that registers after the close was received only sees _closing
        yield from wait_until(
            lambda: q._wake_epoch != epoch or q._closing or q.to_consumer.has_message()
        )
        epoch, closing = _wake(q, p, epoch)
        if closing:
            with q._registry_lock:
                q._registered.discard(p)
            return taken

        while True:
            outcome, payload = yield from _try_take(q, p)
            if outcome is _SlotOutcome.TAKEN:
                taken += 1
                result = handler(payload)
                if isinstance(result, GeneratorType):
                    yield from result
            elif outcome is _SlotOutcome.EMPTY:
                break
        _sleep(q, p)


def queue_stats(q: QueueState) -> Dict[str, int]:
    return {
        "capacity": q.capacity,
        "published": q.stats.published,
        "delivered": q.stats.delivered,
        "notifications": q.stats.notifications,
        "asleep_reports": q.stats.asleep_reports,
        "wake_cycles": q.stats.wake_cycles,
        "queue_full": q.stats.queue_full,
    }


def default_capacity() -> int:
    return get_settings().QUEUE_CAPACITY
