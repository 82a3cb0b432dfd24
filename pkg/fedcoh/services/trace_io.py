"""
Trace file format (JSON lines).

Every line holds one event with a fixed key order per operation; unknown
keys, reordered keys, non-increasing seqs and values outside an unsigned
64-bit word are rejected.

The initial write and flush of every location are issued by the reserved
pseudo-processor "init" on pseudo-node "init", so real processors are
numbered from p0:

    {"seq":0,"proc":"init","node":"init","op":"write","loc":"x","value":0}
    {"seq":1,"proc":"init","node":"init","op":"flush","loc":"x"}

System evictions are issued by "sys" on the evicting node.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Union

from pydantic import ValidationError

from fedcoh.exceptions import TraceFormatError
from fedcoh.schemas.trace import FIELD_ORDER, TraceEventDoc
from fedcoh.services.memcore import Event, OpKind, RmwKind, Trace
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)


def _order_key(op: str, rmw: Union[str, None]) -> str:
    return rmw if op == "rmw" else op


def event_to_line(e: Event) -> str:
    """Serialize one event with the canonical key order."""
    payload = {
        "seq": e.seq,
        "proc": e.proc,
        "node": e.node,
        "op": e.op.value,
        "loc": e.loc,
        "value": e.value,
        "rmw": e.rmw.value if e.rmw else None,
        "expected": e.expected,
        "new": e.new,
        "success": e.success,
        "observed": e.observed,
        "delta": e.delta,
        "old": e.old,
    }
    keys = FIELD_ORDER[_order_key(e.op.value, payload["rmw"])]
    ordered = {k: payload[k] for k in keys}
    if e.after:
        ordered["after"] = list(e.after)
    return json.dumps(ordered, separators=(",", ":"))


def line_to_event(line: str, line_no: int = None) -> Event:
    """
    Parse one trace line.

    Raises:
        TraceFormatError: On malformed JSON, unknown or reordered keys,
            missing fields or values of the wrong type
    """
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"invalid JSON ({e.msg})", line_no) from e
    if not isinstance(raw, dict):
        raise TraceFormatError("expected a JSON object", line_no)

    op = raw.get("op")
    rmw = raw.get("rmw")
    expected_keys = FIELD_ORDER.get(_order_key(op, rmw)) if isinstance(op, str) else None
    if expected_keys is None:
        raise TraceFormatError(f"unknown operation {op!r}/{rmw!r}", line_no)
    keys = [k for k in raw if k != "after"]
    if tuple(keys) != expected_keys or ("after" in raw and list(raw)[-1] != "after"):
        raise TraceFormatError(
            f"fields must be exactly {', '.join(expected_keys)} (+ after), got {', '.join(raw)}",
            line_no,
        )
    missing = [k for k in expected_keys if raw[k] is None]
    if missing:
        raise TraceFormatError(f"null value for {', '.join(missing)}", line_no)

    try:
        doc = TraceEventDoc.model_validate(raw)
    except ValidationError as e:
        raise TraceFormatError(str(e.errors()[0]["msg"]), line_no) from e

    return Event(
        seq=doc.seq,
        proc=doc.proc,
        node=doc.node,
        op=OpKind(doc.op.value),
        loc=doc.loc,
        value=doc.value,
        rmw=RmwKind(doc.rmw) if doc.rmw else None,
        expected=doc.expected,
        new=doc.new,
        success=doc.success,
        observed=doc.observed,
        delta=doc.delta,
        old=doc.old,
        after=tuple(doc.after or ()),
    )


def trace_to_lines(trace: Trace) -> List[str]:
    return [event_to_line(e) for e in trace.events]


def trace_from_lines(lines: Iterable[str]) -> Trace:
    """
    Rebuild a trace from lines; the processor to node map comes from the events.

    Raises:
        TraceFormatError: On malformed lines, non-increasing seqs, edges to
            later events, or a processor appearing on two nodes
    """
    events: List[Event] = []
    node_map: Dict[str, str] = {}
    last_seq = -1
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        event = line_to_event(line, line_no)
        if event.seq <= last_seq:
            raise TraceFormatError(f"seq {event.seq} does not increase", line_no)
        if any(src >= event.seq for src in event.after):
            raise TraceFormatError("edges must reference earlier seqs", line_no)
        if event.proc != "sys":
            known = node_map.setdefault(event.proc, event.node)
            if known != event.node:
                raise TraceFormatError(f"{event.proc} appears on {known} and {event.node}", line_no)
        last_seq = event.seq
        events.append(event)
    return Trace(events=events, node_map=node_map)


def write_trace(trace: Trace, path: Union[str, Path]) -> Path:
    """Write a trace file, one event per line."""
    path = Path(path)
    path.write_text("".join(line + "\n" for line in trace_to_lines(trace)), encoding="utf-8")
    log_with_context(logger, logging.DEBUG, "Wrote trace", file_path=str(path), events=len(trace))
    return path


def read_trace(path: Union[str, Path]) -> Trace:
    """
    Read a trace file.

    Raises:
        TraceFormatError: If any line is malformed
        OSError: If the file cannot be read
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        trace = trace_from_lines(fh)
    log_with_context(logger, logging.DEBUG, "Read trace", file_path=str(path), events=len(trace))
    return trace
