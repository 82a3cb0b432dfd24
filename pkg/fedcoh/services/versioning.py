"""
Versioned items: a header word carrying the version next to the payload.

Header layout: version in the upper 48 bits, payload byte length in the
lower 16. Writers must own the item; readers on any node flush and read
and compare the embedded version with the one they asked for.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from fedcoh.exceptions import OwnershipError, VersionMismatchError
from fedcoh.services.layout import pack_words, unpack_words, words_for
from fedcoh.services.memcore import MemorySystem
from fedcoh.services.ownership import OwnershipDescriptor
from fedcoh.services.topology import ProcId
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)

LENGTH_BITS = 16
LENGTH_MASK = (1 << LENGTH_BITS) - 1


@dataclass(frozen=True)
class VersionedRef:
    """Handle on one version of an item."""
    name: str
    header: str
    words: Tuple[str, ...]
    version: int

    @property
    def locations(self) -> Tuple[str, ...]:
        return (self.header,) + self.words

    @property
    def capacity(self) -> int:
        return len(self.words) * 8


def _header(version: int, length: int) -> int:
    return (version << LENGTH_BITS) | length


def _split(header: int) -> Tuple[int, int]:
    return header >> LENGTH_BITS, header & LENGTH_MASK


def versioned_create(m: MemorySystem, name: str, capacity_bytes: int) -> VersionedRef:
    """Allocate an empty item at version 0."""
    if not 0 < capacity_bytes <= LENGTH_MASK:
        raise ValueError(f"Capacity must be in 1..{LENGTH_MASK}, got {capacity_bytes}")
    words = tuple(f"{name}.w{k}" for k in range(words_for(capacity_bytes)))
    ref = VersionedRef(name=name, header=f"{name}.ver", words=words, version=0)
    for loc in ref.locations:
        m.allocate(loc, 0)
    return ref


def versioned_write(
    m: MemorySystem,
    p: ProcId,
    ref: VersionedRef,
    data: bytes,
    owner: Optional[OwnershipDescriptor] = None,
) -> VersionedRef:
    """
    Store a new version of the item and flush it.

    The payload lines are flushed before the header so a reader that sees
    the new version also finds the new payload in memory.

    Returns:
        A reference to the version just written

    Raises:
        OwnershipError: If `owner` is given and p's node does not own the item
        ValueError: If the data exceeds the item's capacity
    """
    if owner is not None and m.node_of(p) != owner.current_owner:
        raise OwnershipError(f"{p} writes {ref.name} without owning it", owner=owner.current_owner)
    if len(data) > ref.capacity:
        raise ValueError(f"{len(data)} bytes exceed capacity {ref.capacity} of {ref.name}")

    m.flush_line(p, ref.header)
    current, _ = _split(m.read(p, ref.header))
    version = current + 1
    for loc, word in zip(ref.words, pack_words(data, len(ref.words))):
        m.write(p, loc, word)
    for loc in ref.words:
        m.flush_line(p, loc)
    m.write(p, ref.header, _header(version, len(data)))
    m.flush_line(p, ref.header)
    log_with_context(logger, logging.DEBUG, "Versioned write", location=ref.header, proc=p, version=version)
    return replace(ref, version=version)


def versioned_read(m: MemorySystem, p: ProcId, ref: VersionedRef) -> bytes:
    """
    Read the version named by `ref`.

    Raises:
        VersionMismatchError: If memory holds another version, before or
            after the payload is read
    """
    m.flush_line(p, ref.header)
    version, length = _split(m.read(p, ref.header))
    if version != ref.version:
        raise VersionMismatchError(expected=ref.version, found=version)
    words = []
    for loc in ref.words:
        m.flush_line(p, loc)
        words.append(m.read(p, loc))
    m.flush_line(p, ref.header)
    after, _ = _split(m.read(p, ref.header))
    if after != version:
        raise VersionMismatchError(expected=ref.version, found=after)
    return unpack_words(words, length)
