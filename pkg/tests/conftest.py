"""
Shared pytest fixtures for testing.

This module provides reusable fixtures for:
- Environment and settings isolation
- Topologies and memory systems
- Hand-written histories
- Temporary trace and CSV files
"""
import pytest

from fedcoh.config.settings import get_settings
from fedcoh.services.memcore import mem_new
from fedcoh.services.topology import build_topology
from tests.utils.factories import TWO_BY_TWO, build_history, make_memory


# ============================================================================
# Environment Setup
# ============================================================================

@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """
    Clear cached settings around every test.

    Tests that patch FEDCOH_* or LOG_* variables see their values; the next
    test starts from the defaults again.
    """
    for var in ("DEBUG", "LOG_LEVEL", "LOG_FORMAT", "FEDCOH_SEED"):
        monkeypatch.delenv(var, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def settings():
    """Current settings instance."""
    return get_settings()


# ============================================================================
# Topologies and Memory Systems
# ============================================================================

@pytest.fixture
def two_nodes():
    """Two nodes, one processor each (p0 on n0, p1 on n1)."""
    return build_topology(2, 1, 1, 1)


@pytest.fixture
def two_by_two():
    """Two nodes with two processors each."""
    return build_topology(2, 1, 1, 2)


@pytest.fixture
def rich_topology():
    """2 nodes x 2 NUMA x 2 soft-NUMA x 2 cores = 16 processors."""
    return build_topology(2, 2, 2, 2)


@pytest.fixture
def memory(two_nodes):
    """Memory system over two single-core nodes with x = 0."""
    return mem_new(two_nodes, {"x": 0})


@pytest.fixture
def shared_memory():
    """Memory system over two dual-core nodes with x = 0."""
    return make_memory(nodes=2, cores=2)


# ============================================================================
# Histories
# ============================================================================

@pytest.fixture
def node_map():
    """p0, p1 on n0; p2, p3 on n1."""
    return dict(TWO_BY_TWO)


@pytest.fixture
def stale_read_history():
    """
    p2 caches x = 0, p0 writes 1 and flushes, p2 reads 0 again.

    The final read is ordered after the flush by an edge.
    """
    return build_history(
        [("p2", "r", 0), ("p0", "w", 1), ("p0", "f"), ("p2", "r", 0)],
        edges={3: [2]},
    )


@pytest.fixture
def flush_publish_history():
    """p0 writes 1 and flushes; p2 flushes and reads 1 after an edge."""
    return build_history(
        [("p0", "w", 1), ("p0", "f"), ("p2", "f"), ("p2", "r", 1)],
        edges={2: [1]},
    )


# ============================================================================
# Temporary Files
# ============================================================================

@pytest.fixture
def trace_path(tmp_path):
    """Path for a JSON-lines trace file."""
    return tmp_path / "run.jsonl"


@pytest.fixture
def csv_path(tmp_path):
    """Path for a curve CSV file."""
    return tmp_path / "curve.csv"
