"""
Schemas package

Pydantic documents for everything fedcoh reads or writes as JSON or CSV.
"""

from fedcoh.schemas.bench import ContentionParamsDoc, OverheadModelDoc
from fedcoh.schemas.litmus import LitmusReportDoc, Outcome
from fedcoh.schemas.topology import LatencyDoc, TopologyDoc
from fedcoh.schemas.trace import TraceEventDoc, TraceOp
from fedcoh.schemas.verdict import CoherenceModel, VerdictDoc

__all__ = [
    "CoherenceModel",
    "ContentionParamsDoc",
    "LatencyDoc",
    "LitmusReportDoc",
    "OverheadModelDoc",
    "Outcome",
    "TopologyDoc",
    "TraceEventDoc",
    "TraceOp",
    "VerdictDoc",
]
