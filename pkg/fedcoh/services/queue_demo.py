"""
End-to-end queue runs: P producers on one node, C consumers on another.
"""
import logging
import random
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from fedcoh.services.layout import SLOT_PAYLOAD_BYTES
from fedcoh.services.memcore import EvictionConfig, MemorySystem, mem_new
from fedcoh.services.monitors import SlotProtocolMonitor
from fedcoh.services.mpmc_queue import (
    QueueState,
    dequeue_loop,
    enqueue_blocking,
    producer_finish,
    queue_create,
    queue_stats,
)
from fedcoh.services.scheduler import Scheduler, SimThread
from fedcoh.services.topology import build_topology, node_id, procs_of_node
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)


@dataclass
class QueueDemoReport:
    producers: int
    consumers: int
    items: int
    seed: int
    completed: bool
    delivered: int
    lost: int
    duplicated: int
    protocol_violations: int
    steps: int
    stats: Dict[str, int] = field(default_factory=dict)

    @property
    def exactly_once(self) -> bool:
        return self.completed and self.lost == 0 and self.duplicated == 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "producers": self.producers,
            "consumers": self.consumers,
            "items": self.items,
            "seed": self.seed,
            "completed": self.completed,
            "delivered": self.delivered,
            "lost": self.lost,
            "duplicated": self.duplicated,
            "protocol_violations": self.protocol_violations,
            "exactly_once": self.exactly_once,
            "steps": self.steps,
            "stats": dict(self.stats),
        }


def make_payloads(items: int, seed: int) -> List[bytes]:
    """Distinct 63-byte payloads: an 8-byte item id then seeded random bytes."""
    rng = random.Random(seed)
    tail = SLOT_PAYLOAD_BYTES - 8
    return [struct.pack("<Q", i) + bytes(rng.getrandbits(8) for _ in range(tail)) for i in range(items)]


def _producer(q: QueueState, p: str, payloads: List[bytes]) -> SimThread[int]:
    for payload in payloads:
        yield from enqueue_blocking(q, p, payload)
    yield from producer_finish(q, p)
    return len(payloads)


def run_queue_demo(
    producers: int = 2,
    consumers: int = 4,
    items: int = 1000,
    capacity: int = 64,
    seed: int = 0,
    eviction_rate: float = 0.0,
    max_steps: Optional[int] = None,
) -> QueueDemoReport:
    """
    Push `items` payloads through one queue under a seeded schedule and
    compare the delivered multiset with the enqueued one.
    """
    t = build_topology(2, 1, 1, max(producers, consumers))
    eviction = EvictionConfig("random", eviction_rate, seed) if eviction_rate > 0 else None
    m: MemorySystem = mem_new(t, eviction=eviction)
    producer_node, consumer_node = node_id(0), node_id(1)
    q = queue_create(m, capacity, producer_node, consumer_node, producers=producers)
    monitor = SlotProtocolMonitor(m, q.word0_locations, producer_node, consumer_node)

    payloads = make_payloads(items, seed)
    received: List[bytes] = []
    threads: List[SimThread] = []
    for k, p in enumerate(procs_of_node(t, producer_node)[:producers]):
        threads.append(_producer(q, p, payloads[k::producers]))
    for p in procs_of_node(t, consumer_node)[:consumers]:
        threads.append(dequeue_loop(q, p, received.append))

    outcome = Scheduler(seed, max_steps).run(threads)
    sent, got = Counter(payloads), Counter(received)
    report = QueueDemoReport(
        producers=producers,
        consumers=consumers,
        items=items,
        seed=seed,
        completed=outcome.completed,
        delivered=len(received),
        lost=sum((sent - got).values()),
        duplicated=sum((got - sent).values()),
        protocol_violations=len(monitor.violations),
        steps=outcome.steps,
        stats=queue_stats(q),
    )
    log_with_context(logger, logging.INFO, "Queue demo finished", seed=seed, items=items,
                     delivered=report.delivered, lost=report.lost, duplicated=report.duplicated,
                     notifications=q.stats.notifications)
    return report
