"""
Byte layout of multi-word structures in simulated memory.

A cache line is eight 8-byte words, each word its own location. Bytes are
packed little-endian. A queue slot puts the metadata byte at offset 0 and
63 payload bytes after it:

    byte 0   bit 0 = used, bit 1 = owner (0 producer / 1 consumer), bits 2-7 zero
    1..63    payload
"""
import struct
from typing import List, Sequence, Tuple

WORD_BYTES = 8
LINE_WORDS = 8
LINE_BYTES = WORD_BYTES * LINE_WORDS
SLOT_PAYLOAD_BYTES = LINE_BYTES - 1

USED_BIT = 0x01
OWNER_BIT = 0x02
META_MASK = 0xFF

_LINE = struct.Struct("<8Q")


def words_for(nbytes: int) -> int:
    """Words needed to hold `nbytes`."""
    return max(1, -(-nbytes // WORD_BYTES))


def pack_words(data: bytes, nwords: int) -> List[int]:
    """Pack bytes into `nwords` little-endian words, zero padded."""
    if len(data) > nwords * WORD_BYTES:
        raise ValueError(f"{len(data)} bytes do not fit in {nwords} words")
    padded = data.ljust(nwords * WORD_BYTES, b"\0")
    return list(struct.unpack(f"<{nwords}Q", padded))


def unpack_words(words: Sequence[int], length: int) -> bytes:
    """Inverse of pack_words, truncated to `length` bytes."""
    return struct.pack(f"<{len(words)}Q", *words)[:length]


def pack_slot(meta: int, payload: bytes) -> List[int]:
    """
    Compose a slot line from its metadata byte and payload.

    Raises:
        ValueError: If the payload exceeds 63 bytes or meta has stray bits
    """
    if len(payload) > SLOT_PAYLOAD_BYTES:
        raise ValueError(f"Slot payload is limited to {SLOT_PAYLOAD_BYTES} bytes, got {len(payload)}")
    if meta & ~(USED_BIT | OWNER_BIT):
        raise ValueError(f"Metadata bits 2-7 must be zero, got {meta:#04x}")
    line = bytes([meta]) + payload.ljust(SLOT_PAYLOAD_BYTES, b"\0")
    return list(_LINE.unpack(line))


def unpack_slot(words: Sequence[int]) -> Tuple[int, bytes]:
    """Split a slot line into (metadata byte, 63 payload bytes)."""
    line = _LINE.pack(*words)
    return line[0], line[1:]


def meta_of(word0: int) -> int:
    return word0 & META_MASK


def with_meta(word0: int, meta: int) -> int:
    """Replace the metadata byte of a slot's first word."""
    return (word0 & ~META_MASK) | meta
