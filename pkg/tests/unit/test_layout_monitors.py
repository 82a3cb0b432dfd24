"""
Unit tests for slot layout and protocol monitors.

Tests cover:
- Word and slot packing
- Metadata byte helpers
- Slot transitions allowed per role
- Ownership and mutual exclusion monitors
"""
import pytest

from fedcoh.exceptions import OwnershipError
from fedcoh.services.layout import (
    OWNER_BIT,
    SLOT_PAYLOAD_BYTES,
    USED_BIT,
    meta_of,
    pack_slot,
    pack_words,
    unpack_slot,
    unpack_words,
    with_meta,
    words_for,
)
from fedcoh.services.memcore import mem_new
from fedcoh.services.monitors import MutexMonitor, OwnershipMonitor, SlotProtocolMonitor
from fedcoh.services.ownership import ownership_create
from fedcoh.services.topology import build_topology
from tests.utils.factories import make_payload

pytestmark = [pytest.mark.unit, pytest.mark.synclib]

SLOT = "q.slot0.w0"


class TestLayout:
    """Test byte packing."""

    @pytest.mark.parametrize("nbytes,words", [(0, 1), (1, 1), (8, 1), (9, 2), (63, 8), (64, 8)])
    def test_words_for(self, nbytes, words):
        """Test word counts round up."""
        assert words_for(nbytes) == words

    def test_little_endian_words(self):
        """Test bytes pack little-endian and zero padded."""
        assert pack_words(b"\x01\x02", 2) == [0x0201, 0]
        assert unpack_words([0x0201, 0], 2) == b"\x01\x02"

    def test_words_overflow(self):
        """Test data larger than the words is rejected."""
        with pytest.raises(ValueError):
            pack_words(b"\0" * 9, 1)

    def test_slot_metadata_in_low_byte(self):
        """Test the metadata byte is the low byte of word 0."""
        payload = make_payload(seed=4)
        words = pack_slot(USED_BIT | OWNER_BIT, payload)
        assert len(words) == 8
        assert meta_of(words[0]) == 0x03
        assert words[0] >> 8 == int.from_bytes(payload[:7], "little")
        assert unpack_slot(words) == (0x03, payload)

    def test_short_payload_zero_padded(self):
        """Test short payloads fill with zeros."""
        _, payload = unpack_slot(pack_slot(USED_BIT, b"hi"))
        assert payload == b"hi" + b"\0" * (SLOT_PAYLOAD_BYTES - 2)

    def test_slot_payload_limit(self):
        """Test slot payloads hold at most 63 bytes."""
        with pytest.raises(ValueError):
            pack_slot(0, b"\0" * 64)

    def test_stray_metadata_bits(self):
        """Test bits 2-7 of the metadata must be zero."""
        with pytest.raises(ValueError):
            pack_slot(0x04, b"")

    def test_with_meta_keeps_payload_bytes(self):
        """Test replacing metadata leaves the payload bytes of word 0 alone."""
        assert with_meta(0xABCD00, OWNER_BIT) == 0xABCD02


@pytest.fixture
def slot_memory():
    """Three single-core nodes with one slot word."""
    return mem_new(build_topology(3), {SLOT: 0})


class TestSlotProtocolMonitor:
    """Test slot metadata transitions."""

    def test_legal_cycle(self, slot_memory):
        """Test claim, publish, take and return are all legal."""
        monitor = SlotProtocolMonitor(slot_memory, [SLOT], "n0", "n1")
        slot_memory.atomic_cas("p0", SLOT, 0, USED_BIT)
        slot_memory.write("p0", SLOT, with_meta(0x4200, OWNER_BIT | USED_BIT))
        slot_memory.flush_line("p0", SLOT)
        slot_memory.atomic_cas("p1", SLOT, OWNER_BIT | USED_BIT | 0x4200, OWNER_BIT | 0x4200)
        slot_memory.write("p1", SLOT, 0)
        assert monitor.ok

    def test_failed_cas_ignored(self, slot_memory):
        """Test unsuccessful CAS never counts as a transition."""
        monitor = SlotProtocolMonitor(slot_memory, [SLOT], "n0", "n1")
        slot_memory.atomic_cas("p1", SLOT, OWNER_BIT | USED_BIT, OWNER_BIT)
        assert monitor.ok

    def test_producer_cannot_free(self, slot_memory):
        """Test a producer writing used=0 is flagged."""
        monitor = SlotProtocolMonitor(slot_memory, [SLOT], "n0", "n1")
        slot_memory.write("p0", SLOT, 0)
        assert not monitor.ok
        assert "producer wrote metadata" in monitor.violations[0].detail

    def test_consumer_cannot_claim(self, slot_memory):
        """Test a consumer claiming a free slot is flagged."""
        monitor = SlotProtocolMonitor(slot_memory, [SLOT], "n0", "n1")
        slot_memory.atomic_cas("p1", SLOT, 0, USED_BIT)
        assert monitor.violations[0].detail == "consumer CAS 0x0->0x1"

    def test_third_node(self, slot_memory):
        """Test nodes outside the pair may not write slots."""
        monitor = SlotProtocolMonitor(slot_memory, [SLOT], "n0", "n1")
        slot_memory.write("p2", SLOT, 0)
        assert monitor.violations[0].detail == "write by third node n2"


class TestOwnershipMonitor:
    """Test access checks against the current owner."""

    def test_owner_access_allowed(self, two_nodes):
        """Test the owner node may touch its data."""
        m = mem_new(two_nodes, {"d": 0})
        monitor = OwnershipMonitor(m, ownership_create(m, ["d"], "n0"), strict=False)
        m.write("p0", "d", 1)
        assert monitor.ok

    def test_foreign_access_recorded(self, two_nodes):
        """Test another node's access is recorded in lenient mode."""
        m = mem_new(two_nodes, {"d": 0})
        monitor = OwnershipMonitor(m, ownership_create(m, ["d"], "n0"), strict=False)
        m.read("p1", "d")
        assert len(monitor.violations) == 1
        assert "owned by n0" in monitor.violations[0].detail

    def test_strict_raises(self, two_nodes):
        """Test strict mode raises on the first violation."""
        m = mem_new(two_nodes, {"d": 0})
        OwnershipMonitor(m, ownership_create(m, ["d"], "n0"), strict=True)
        with pytest.raises(OwnershipError):
            m.write("p1", "d", 1)

    def test_strict_defaults_to_debug(self, two_nodes, monkeypatch):
        """Test DEBUG selects strict mode."""
        from fedcoh.config.settings import get_settings

        monkeypatch.setenv("DEBUG", "true")
        get_settings.cache_clear()
        m = mem_new(two_nodes, {"d": 0})
        assert OwnershipMonitor(m, ownership_create(m, ["d"], "n0")).strict

    def test_evictions_ignored(self, two_nodes):
        """Test system evictions are not accesses."""
        m = mem_new(two_nodes, {"d": 0})
        monitor = OwnershipMonitor(m, ownership_create(m, ["d"], "n0"), strict=False)
        m.write("p0", "d", 1)
        m.inject_eviction("n1", "d")
        assert monitor.ok


class TestMutexMonitor:
    """Test critical-section overlap counting."""

    def test_overlap_counted(self):
        """Test entering while someone is inside is a violation."""
        monitor = MutexMonitor()
        monitor.enter("p0")
        monitor.enter("p1")
        monitor.exit("p0")
        monitor.exit("p1")
        monitor.enter("p0")
        assert monitor.violations == 1
        assert monitor.entries == 3
