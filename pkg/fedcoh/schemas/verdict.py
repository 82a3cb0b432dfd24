"""
Checker verdict schema.
"""
from enum import Enum
from typing import List, Optional, Union

from pydantic import BaseModel, Field


class CoherenceModel(str, Enum):
    """
    Coherence definitions a history can be checked against.

    - **full**: one coherent cache, reads return the last write
    - **weak**: per-processor caches with explicit flushes
    - **federated**: node-shared caches, explicit flushes plus system evictions
    - **federated-axiomatic**: federated, decided by brute-force rule evaluation
    """
    FULL = "full"
    WEAK = "weak"
    FEDERATED = "federated"
    FEDERATED_AXIOMATIC = "federated-axiomatic"


class VerdictDoc(BaseModel):
    """One verdict line printed by `fedcoh check`."""
    location: str = Field(..., description="Checked location")
    model: CoherenceModel = Field(..., description="Coherence model")
    accepted: bool = Field(..., description="Whether a witness order exists")
    witness: Optional[List[Union[int, str]]] = Field(
        None, description="Witness order: event seqs and inserted flush@<node> markers"
    )
    culprit: Optional[int] = Field(None, description="Seq of the first unsatisfiable read")
    rule: Optional[str] = Field(None, description="Rule that failed at the culprit read")

    class Config:
        """Pydantic configuration."""
        json_schema_extra = {
            "example": {
                "location": "x",
                "model": "federated",
                "accepted": True,
                "witness": [0, 1, 2, "flush@n1", 3],
            }
        }
