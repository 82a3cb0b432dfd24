"""
Litmus report schema.
"""
from enum import Enum
from typing import Dict, List

from pydantic import BaseModel, ConfigDict, Field


class Outcome(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    MIXED = "mixed"


class LitmusReportDoc(BaseModel):
    """Aggregate outcome of running one litmus case repeatedly."""
    model_config = ConfigDict(
        populate_by_name=True,
        json_schema_extra={
            "example": {
                "case": "L2",
                "runs": 1000,
                "pass": 1000,
                "verdicts": {"full": "reject", "weak": "accept", "federated": "accept"},
            }
        },
    )

    case: str = Field(..., description="Case name")
    runs: int = Field(..., ge=0, description="Number of runs")
    passed: int = Field(..., alias="pass", ge=0, description="Runs whose verdicts matched expectations")
    verdicts: Dict[str, Outcome] = Field(..., description="Observed verdict per model over all runs")
    failed_seeds: List[int] = Field(default_factory=list, description="Seeds of failing runs")
