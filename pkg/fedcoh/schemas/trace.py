"""
Trace file schemas.

One JSON object per line, e.g.
{"seq":12,"proc":"p3","node":"n1","op":"write","loc":"x","value":2}
"""
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, StrictBool, StrictInt


class TraceOp(str, Enum):
    """Operation names used on the wire."""
    WRITE = "write"
    READ = "read"
    FLUSH = "flush"
    RMW = "rmw"
    EVICT = "evict"


WORD_MAX = (1 << 64) - 1

_HEAD = ("seq", "proc", "node", "op", "loc")

# Fixed key order per operation; "after" may follow any of them
FIELD_ORDER: Dict[str, Tuple[str, ...]] = {
    "write": _HEAD + ("value",),
    "read": _HEAD + ("value",),
    "flush": _HEAD,
    "evict": _HEAD,
    "cas": _HEAD + ("rmw", "expected", "new", "success", "observed"),
    "faa": _HEAD + ("rmw", "delta", "old"),
}


class TraceEventDoc(BaseModel):
    """One trace line."""
    seq: StrictInt = Field(..., ge=0, description="Global sequence number")
    proc: str = Field(..., description="Issuing processor (init, sys or p<k>)")
    node: str = Field(..., description="Node of the issuing processor")
    op: TraceOp = Field(..., description="Operation kind")
    loc: str = Field(..., description="Location id")
    value: Optional[StrictInt] = Field(None, ge=0, le=WORD_MAX, description="Written or returned value")
    rmw: Optional[str] = Field(None, description="cas or faa")
    expected: Optional[StrictInt] = Field(None, ge=0, le=WORD_MAX)
    new: Optional[StrictInt] = Field(None, ge=0, le=WORD_MAX)
    success: Optional[StrictBool] = None
    observed: Optional[StrictInt] = Field(None, ge=0, le=WORD_MAX)
    delta: Optional[StrictInt] = Field(None, ge=0, le=WORD_MAX)
    old: Optional[StrictInt] = Field(None, ge=0, le=WORD_MAX)
    after: Optional[List[StrictInt]] = Field(None, description="Seqs this event is ordered after")

    class Config:
        """Pydantic configuration."""
        extra = "forbid"
        json_schema_extra = {
            "examples": [
                {"seq": 12, "proc": "p3", "node": "n1", "op": "write", "loc": "x", "value": 2},
                {"seq": 13, "proc": "p3", "node": "n1", "op": "rmw", "loc": "x", "rmw": "cas",
                 "expected": 0, "new": 1, "success": True, "observed": 0, "after": [4]},
            ]
        }
