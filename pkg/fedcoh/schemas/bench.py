"""
Benchmark parameter documents.
"""
from typing import List, Optional

from pydantic import BaseModel, Field, PositiveFloat


class OverheadModelDoc(BaseModel):
    """
    Parameters of the analytic overhead model.

    Omitted fields fall back to the configured defaults.
    """
    slope_within_numa: Optional[PositiveFloat] = Field(None, description="Overhead per added core in the first NUMA domain")
    slope_cross_numa: Optional[PositiveFloat] = Field(None, description="Overhead per added core in further NUMA domains")
    derivative_per_latency: Optional[PositiveFloat] = Field(
        None, description="Overhead per added cross-node core per ns of disaggregated latency"
    )
    base: Optional[PositiveFloat] = Field(None, description="Overhead at one core")

    class Config:
        """Pydantic configuration."""
        extra = "forbid"
        json_schema_extra = {
            "example": {
                "slope_within_numa": 0.87,
                "slope_cross_numa": 1.19,
                "derivative_per_latency": 0.011125,
                "base": 1.0,
            }
        }


class ContentionParamsDoc(BaseModel):
    """Inputs of the contention simulator."""
    placement: List[str] = Field(..., min_length=1, description="Processors that increment the shared line")
    local_cost_ns: Optional[PositiveFloat] = Field(None, description="Cost of one increment on an owned line")
    duration_ns: Optional[PositiveFloat] = Field(None, description="Simulated run length")
    seed: int = Field(0, description="Seed for start-time jitter")

    class Config:
        """Pydantic configuration."""
        extra = "forbid"
