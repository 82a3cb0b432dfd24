"""
Pipelines whose stages run on different nodes.

Items live in shared memory; only their ids travel through the MPMC
queues between stages. The sending stage flushes an item's lines before
enqueueing its id and the receiving stage invalidates them before the
first read.
"""
import logging
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

from fedcoh.exceptions import QueueUsageError
from fedcoh.services.memcore import MemorySystem
from fedcoh.services.mpmc_queue import QueueState, dequeue_loop, enqueue_blocking, producer_finish, queue_create
from fedcoh.services.scheduler import Scheduler, SimThread, schedule
from fedcoh.services.topology import NodeId, ProcId, procs_of_node
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)

_ITEM_ID = struct.Struct("<Q")

StageFn = Callable[[int], int]


def increment(value: int) -> int:
    return value + 1


def identity(value: int) -> int:
    return value


def item_location(item: int) -> str:
    return f"item{item}.field"


def pipeline_handoff(q: QueueState, src_proc: ProcId, item: int,
                     item_locations: Sequence[str]) -> SimThread[int]:
    """Flush the item's lines at the source, then enqueue its id."""
    for loc in item_locations:
        q.m.flush_line(src_proc, loc)
    slot = yield from enqueue_blocking(q, src_proc, _ITEM_ID.pack(item))
    return slot


def pipeline_receive(m: MemorySystem, dst_proc: ProcId, item_locations: Sequence[str],
                     invalidate: bool = True) -> None:
    """Invalidate the item's lines at the destination before reading them."""
    if invalidate:
        for loc in item_locations:
            m.flush_line(dst_proc, loc)


@dataclass
class PipelineResult:
    completed: bool
    sink: List[int] = field(default_factory=list)
    values: Dict[int, int] = field(default_factory=dict)
    steps: int = 0


class Pipeline:
    """
    A chain of stages, stage k served by the processors of stage_nodes[k].

    Stage 0 takes items from an initial assignment; every stage applies
    `stage_fn` to each item's field.
    """

    def __init__(
        self,
        m: MemorySystem,
        stage_nodes: Sequence[NodeId],
        items: int,
        capacity: int = 8,
        stage_fn: StageFn = increment,
        invalidate_on_receive: bool = True,
        cores_per_stage: Optional[int] = None,
    ):
        if not stage_nodes:
            raise QueueUsageError("A pipeline needs at least one stage")
        if any(a == b for a, b in zip(stage_nodes, stage_nodes[1:])):
            raise QueueUsageError("Consecutive pipeline stages must run on different nodes")
        self.m = m
        self.stage_nodes = list(stage_nodes)
        self.items = items
        self.stage_fn = stage_fn
        self.invalidate_on_receive = invalidate_on_receive
        self.stage_procs: List[List[ProcId]] = []
        for node in self.stage_nodes:
            procs = procs_of_node(m.topology, node)
            self.stage_procs.append(procs[:cores_per_stage] if cores_per_stage else procs)
        for item in range(items):
            m.allocate(item_location(item), 0)
        self.queues: List[QueueState] = [
            queue_create(m, capacity, self.stage_nodes[k], self.stage_nodes[k + 1],
                         producers=len(self.stage_procs[k]), name=f"pipe{k}")
            for k in range(len(self.stage_nodes) - 1)
        ]
        self.sink: List[int] = []

    def warm_caches(self) -> None:
        """Load every item's field into every stage node's cache."""
        for procs in self.stage_procs:
            for item in range(self.items):
                self.m.read(procs[0], item_location(item))

    def _process(self, p: ProcId, item: int) -> None:
        loc = item_location(item)
        value = self.m.read(p, loc)
        self.m.write(p, loc, self.stage_fn(value))

    def _forward(self, stage: int, p: ProcId, item: int) -> SimThread[None]:
        if stage + 1 < len(self.stage_nodes):
            yield from pipeline_handoff(self.queues[stage], p, item, [item_location(item)])
        else:
            self.m.flush_line(p, item_location(item))
            self.sink.append(item)
            yield from schedule()

    def _source(self, p: ProcId, assigned: Sequence[int]) -> SimThread[None]:
        for item in assigned:
            pipeline_receive(self.m, p, [item_location(item)], self.invalidate_on_receive)
            self._process(p, item)
            yield from schedule()
            yield from self._forward(0, p, item)
        if self.queues:
            yield from producer_finish(self.queues[0], p)

    def _stage(self, stage: int, p: ProcId) -> SimThread[None]:
        def handle(payload: bytes) -> SimThread[None]:
            (item,) = _ITEM_ID.unpack(payload[:_ITEM_ID.size])
            pipeline_receive(self.m, p, [item_location(item)], self.invalidate_on_receive)
            self._process(p, item)
            yield from schedule()
            yield from self._forward(stage, p, item)

        yield from dequeue_loop(self.queues[stage - 1], p, handle)
        if stage < len(self.queues):
            yield from producer_finish(self.queues[stage], p)

    def threads(self) -> List[SimThread[None]]:
        sources = self.stage_procs[0]
        threads = [
            self._source(p, range(i, self.items, len(sources))) for i, p in enumerate(sources)
        ]
        for stage in range(1, len(self.stage_nodes)):
            threads.extend(self._stage(stage, p) for p in self.stage_procs[stage])
        return threads

    def run(self, seed: int = 0, max_steps: Optional[int] = None) -> PipelineResult:
        """Run all stages under the seeded scheduler and collect final field values."""
        outcome = Scheduler(seed, max_steps).run(self.threads())
        values = {item: self.m.memory_value(item_location(item)) for item in range(self.items)}
        log_with_context(logger, logging.INFO, "Pipeline run finished", stages=len(self.stage_nodes),
                         items=self.items, completed=outcome.completed, steps=outcome.steps)
        return PipelineResult(outcome.completed, list(self.sink), values, outcome.steps)
