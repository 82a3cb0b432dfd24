"""
Immutable items with a freed flag and garbage collection.

A publisher writes an item once and flushes it; from then on any node can
read it straight from memory. Freeing sets a flag in disaggregated memory
that a collector flush-reads on its sweep.
"""
import itertools
import logging
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List

from fedcoh.exceptions import DoubleFreeError, ItemFreedError
from fedcoh.services.layout import pack_words, unpack_words, words_for
from fedcoh.services.memcore import MemorySystem
from fedcoh.services.topology import NodeId, ProcId
from fedcoh.services.versioning import LENGTH_BITS, LENGTH_MASK, VersionedRef
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)

PUBLISHED_VERSION = 1


class ItemState(str, Enum):
    BUILDING = "building"
    PUBLISHED = "published"
    FREED = "freed"
    RECLAIMED = "reclaimed"


@dataclass
class ImmutableItem:
    ref: VersionedRef
    freed_flag: str
    publisher: NodeId
    state: ItemState = ItemState.BUILDING


class ImmutableHeap:
    """Allocator and registry for immutable items in one memory system."""

    def __init__(self, m: MemorySystem, prefix: str = "imm"):
        self.m = m
        self.prefix = prefix
        self._ids = itertools.count()
        self._items: Dict[str, ImmutableItem] = {}
        self._lock = threading.Lock()

    def item(self, ref: VersionedRef) -> ImmutableItem:
        with self._lock:
            return self._items[ref.name]

    @property
    def items(self) -> List[ImmutableItem]:
        with self._lock:
            return list(self._items.values())

    def publish_immutable(self, p: ProcId, data: bytes) -> VersionedRef:
        """
        Write an item and flush every line of it.

        Raises:
            ValueError: If the item is larger than the length field allows
        """
        if len(data) > LENGTH_MASK:
            raise ValueError(f"Immutable items are limited to {LENGTH_MASK} bytes")
        with self._lock:
            name = f"{self.prefix}{next(self._ids)}"
        nwords = words_for(len(data))
        ref = VersionedRef(
            name=name,
            header=f"{name}.ver",
            words=tuple(f"{name}.w{k}" for k in range(nwords)),
            version=PUBLISHED_VERSION,
        )
        item = ImmutableItem(ref=ref, freed_flag=f"{name}.freed", publisher=self.m.node_of(p))
        for loc in ref.locations + (item.freed_flag,):
            self.m.allocate(loc, 0)
        with self._lock:
            self._items[name] = item

        for loc, word in zip(ref.words, pack_words(data, nwords)):
            self.m.write(p, loc, word)
        self.m.write(p, ref.header, (PUBLISHED_VERSION << LENGTH_BITS) | len(data))
        for loc in ref.locations:
            self.m.flush_line(p, loc)
        item.state = ItemState.PUBLISHED
        log_with_context(logger, logging.DEBUG, "Published immutable item",
                         location=ref.header, proc=p, size=len(data))
        return ref

    def get_immutable(self, p: ProcId, ref: VersionedRef) -> bytes:
        """
        Read an item's bytes.

        The publishing node reads through its cache; every other node reads
        memory directly.

        Raises:
            ItemFreedError: If the item has been freed
        """
        item = self.item(ref)
        if item.state is ItemState.RECLAIMED or self._freed(p, item):
            raise ItemFreedError(ref.name)
        if self.m.node_of(p) == item.publisher:
            load = self.m.read
        else:
            load = self.m.read_bypass
        length = load(p, ref.header) & LENGTH_MASK
        return unpack_words([load(p, loc) for loc in ref.words], length)

    def free_immutable(self, p: ProcId, ref: VersionedRef) -> None:
        """
        Set the item's freed flag and flush it.

        Raises:
            DoubleFreeError: If the flag is already set
        """
        item = self.item(ref)
        if item.state is ItemState.RECLAIMED or self._freed(p, item):
            raise DoubleFreeError(ref.name)
        self.m.write(p, item.freed_flag, 1)
        self.m.flush_line(p, item.freed_flag)
        item.state = ItemState.FREED

    def gc_sweep(self, p: ProcId) -> int:
        """Flush-read every live item's freed flag and reclaim the freed ones."""
        reclaimed = 0
        for item in self.items:
            if item.state is ItemState.RECLAIMED:
                continue
            if self._freed(p, item):
                item.state = ItemState.RECLAIMED
                reclaimed += 1
        if reclaimed:
            log_with_context(logger, logging.INFO, "Reclaimed immutable items", proc=p, count=reclaimed)
        return reclaimed

    def _freed(self, p: ProcId, item: ImmutableItem) -> bool:
        self.m.flush_line(p, item.freed_flag)
        return self.m.read(p, item.freed_flag) == 1


def publish_immutable(heap: ImmutableHeap, p: ProcId, data: bytes) -> VersionedRef:
    return heap.publish_immutable(p, data)


def get_immutable(heap: ImmutableHeap, p: ProcId, ref: VersionedRef) -> bytes:
    return heap.get_immutable(p, ref)


def free_immutable(heap: ImmutableHeap, p: ProcId, ref: VersionedRef) -> None:
    heap.free_immutable(p, ref)


def gc_sweep(heap: ImmutableHeap, p: ProcId) -> int:
    return heap.gc_sweep(p)
