"""
Topology document schema.
"""
from typing import Optional

from pydantic import BaseModel, Field


class LatencyDoc(BaseModel):
    """Per-level communication latencies in nanoseconds."""
    soft: Optional[float] = Field(None, description="Same soft-NUMA domain")
    numa: Optional[float] = Field(None, description="Same NUMA domain, different soft-NUMA")
    cross_numa: Optional[float] = Field(None, description="Different NUMA domains of one node")
    disagg: Optional[float] = Field(None, description="Different nodes via disaggregated memory")

    class Config:
        """Pydantic configuration."""
        extra = "forbid"


class TopologyDoc(BaseModel):
    """
    Machine shape as nested counts.

    Processors are numbered in nesting order: node, NUMA domain,
    soft-NUMA domain, core.
    """
    nodes: int = Field(..., description="Number of nodes")
    numa_per_node: int = Field(1, description="NUMA domains per node")
    soft_per_numa: int = Field(1, description="Soft-NUMA domains per NUMA domain")
    cores_per_soft: int = Field(1, description="Cores per soft-NUMA domain")
    lat_ns: LatencyDoc = Field(default_factory=LatencyDoc, description="Latency overrides")

    class Config:
        """Pydantic configuration."""
        extra = "forbid"
        json_schema_extra = {
            "example": {
                "nodes": 1,
                "numa_per_node": 2,
                "soft_per_numa": 16,
                "cores_per_soft": 8,
                "lat_ns": {"soft": 25.8, "numa": 106.6, "cross_numa": 184.9, "disagg": 200},
            }
        }
