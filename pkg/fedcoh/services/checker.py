"""
Coherence checker for per-location histories.

Decides whether a history satisfies:
- full coherence: a total order where every read returns the last write
- weak coherence: per-processor caches, reads follow the cached value or the
  last written-back value depending on whether the reader flushed
- federated coherence: node-shared caches, plus flushes the system may
  insert anywhere (evictions)

Federated coherence is decided twice: by an operational search over the
same line-state machine the simulator uses, and by a brute-force search that
builds the total order explicitly and evaluates the read rules on it. The two
serve as oracles for each other.

All searches explore enabled events in ascending processor id, then seq,
and memoize failed states. Verdicts never depend on that order.
"""
import json
import logging
import re
import sys
from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from fedcoh.config.settings import get_settings
from fedcoh.exceptions import HistoryBoundExceededError
from fedcoh.schemas.verdict import CoherenceModel, VerdictDoc
from fedcoh.services.memcore import INIT_PROC, SYSTEM_PROC, Event, OpKind, Trace
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)

WitnessStep = Union[int, str]

RULE_FULL = "last-write"
RULE_CACHED = "2(a)"
RULE_MEMORY = "2(b)"

_MARKER = re.compile(r"^flush@(.+)$")


def flush_marker(domain: str) -> str:
    """Witness marker for a flush inserted on behalf of `domain`."""
    return f"flush@{domain}"


def _proc_sort_key(name: str) -> Tuple[int, Union[int, str]]:
    if name.startswith("p") and name[1:].isdigit():
        return 0, int(name[1:])
    return 1, name


def thread_of(e: Event) -> str:
    """Issue stream of an event; evictions form one stream per node."""
    return f"{SYSTEM_PROC}@{e.node}" if e.proc == SYSTEM_PROC else e.proc


# ============================================================================
# Histories
# ============================================================================

@dataclass
class History:
    """
    One location's events projected from a trace.

    `events` starts with the init write and init flush. Every other event's
    `after` lists the same-location events of other streams that must
    precede it.
    """
    location: str
    events: List[Event]
    node_map: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.events) < 2 or not (self.events[0].is_init and self.events[1].is_init):
            raise ValueError(f"History for {self.location} lacks the init write+flush prefix")

    @property
    def init_value(self) -> int:
        return self.events[0].value

    @property
    def init_seqs(self) -> List[int]:
        return [e.seq for e in self.events if e.is_init]

    @property
    def body(self) -> List[Event]:
        """Events after the init prefix."""
        return [e for e in self.events if not e.is_init]

    def __len__(self) -> int:
        return len(self.body)

    def by_seq(self) -> Dict[int, Event]:
        return {e.seq: e for e in self.events}


def project_histories(
    trace: Trace, locations: Optional[Iterable[str]] = None
) -> Dict[str, History]:
    """
    Split a trace into per-location histories.

    Happens-before is program order plus recorded edges, closed transitively
    across all locations; each history keeps it as same-location edges.

    Args:
        trace: Recorded trace
        locations: Optional subset of locations to project

    Returns:
        Mapping location -> History, in first-appearance order
    """
    wanted: Optional[Set[str]] = set(locations) if locations is not None else None
    edge_sources = {s for e in trace.events for s in e.after}

    thread_len: Dict[str, int] = defaultdict(int)
    thread_clock: Dict[str, Dict[str, int]] = {}
    clocks: Dict[int, Dict[str, int]] = {}
    position: Dict[int, Tuple[str, int]] = {}

    for e in trace.events:
        if e.is_init:
            continue
        th = thread_of(e)
        clock = dict(thread_clock.get(th, {}))
        for src in e.after:
            for q, k in clocks.get(src, {}).items():
                if clock.get(q, -1) < k:
                    clock[q] = k
        idx = thread_len[th]
        clock[th] = idx
        thread_len[th] = idx + 1
        thread_clock[th] = clock
        position[e.seq] = (th, idx)
        if e.seq in edge_sources or wanted is None or e.loc in wanted:
            clocks[e.seq] = clock

    grouped: Dict[str, List[Event]] = {}
    for e in trace.events:
        if wanted is not None and e.loc not in wanted:
            continue
        grouped.setdefault(e.loc, []).append(e)

    histories: Dict[str, History] = {}
    for loc, events in grouped.items():
        per_thread: Dict[str, Tuple[List[int], List[int]]] = defaultdict(lambda: ([], []))
        for e in events:
            if e.is_init:
                continue
            th, idx = position[e.seq]
            per_thread[th][0].append(idx)
            per_thread[th][1].append(e.seq)

        projected: List[Event] = []
        for e in events:
            if e.is_init:
                projected.append(replace(e, after=()))
                continue
            th, _ = position[e.seq]
            preds = []
            for q, k in clocks[e.seq].items():
                if q == th or q not in per_thread:
                    continue
                idxs, seqs = per_thread[q]
                cut = bisect_right(idxs, k)
                if cut:
                    preds.append(seqs[cut - 1])
            projected.append(replace(e, after=tuple(sorted(preds))))

        procs = {e.proc for e in projected if e.proc not in (INIT_PROC, SYSTEM_PROC)}
        nm = {p: trace.node_map.get(p, next(e.node for e in projected if e.proc == p)) for p in procs}
        histories[loc] = History(location=loc, events=projected, node_map=nm)
    return histories


# ============================================================================
# Verdicts
# ============================================================================

@dataclass
class Verdict:
    """Outcome of checking one history against one model."""
    location: str
    model: CoherenceModel
    accepted: bool
    witness: Optional[List[WitnessStep]] = None
    culprit: Optional[int] = None
    rule: Optional[str] = None
    allowed: Tuple[int, ...] = ()
    states: int = 0
    history: Optional[History] = field(default=None, repr=False, compare=False)

    def to_doc(self) -> VerdictDoc:
        return VerdictDoc(
            location=self.location,
            model=self.model,
            accepted=self.accepted,
            witness=self.witness,
            culprit=self.culprit,
            rule=self.rule,
        )


def verdict_to_json(v: Verdict) -> str:
    """Compact JSON verdict; culprit and rule only appear on rejection."""
    doc = v.to_doc().model_dump(mode="json")
    out = {k: doc[k] for k in ("location", "model", "accepted", "witness")}
    if not v.accepted:
        out["culprit"] = doc["culprit"]
        out["rule"] = doc["rule"]
    return json.dumps(out, separators=(",", ":"))


# ============================================================================
# Search plumbing
# ============================================================================

class _Streams:
    """Per-stream event lists with cross-stream predecessor constraints."""

    def __init__(self, history: History):
        body = history.body
        names = sorted({thread_of(e) for e in body}, key=_proc_sort_key)
        self.names = names
        self.events: List[List[Event]] = [[] for _ in names]
        where: Dict[int, Tuple[int, int]] = {}
        index = {n: i for i, n in enumerate(names)}
        for e in body:
            t = index[thread_of(e)]
            where[e.seq] = (t, len(self.events[t]))
            self.events[t].append(e)
        self.preds: List[List[Tuple[Tuple[int, int], ...]]] = [
            [tuple(where[s] for s in e.after if s in where) for e in evs] for evs in self.events
        ]
        self.lengths = tuple(len(evs) for evs in self.events)
        self.start = tuple(0 for _ in names)

    def done(self, pos: Tuple[int, ...]) -> bool:
        return pos == self.lengths

    def enabled(self, pos: Tuple[int, ...]) -> Iterable[Tuple[int, Event]]:
        for t, evs in enumerate(self.events):
            i = pos[t]
            if i == len(evs):
                continue
            if all(pos[q] > k for q, k in self.preds[t][i]):
                yield t, evs[i]

    @staticmethod
    def advance(pos: Tuple[int, ...], t: int) -> Tuple[int, ...]:
        return pos[:t] + (pos[t] + 1,) + pos[t + 1:]


@dataclass
class _DeadEnd:
    depth: int = -1
    culprit: Optional[int] = None
    rule: Optional[str] = None
    allowed: Tuple[int, ...] = ()

    def note(self, depth: int, blocked: List[Tuple[int, str, Tuple[int, ...]]]) -> None:
        if not blocked or depth < self.depth:
            return
        seq, rule, allowed = min(blocked)
        if depth > self.depth or self.culprit is None or seq < self.culprit:
            self.depth, self.culprit, self.rule, self.allowed = depth, seq, rule, allowed


def _check_bound(history: History, bound: int) -> None:
    if len(history) > bound:
        log_with_context(
            logger, logging.WARNING, "History exceeds checker bound",
            location=history.location, events=len(history), bound=bound,
        )
        raise HistoryBoundExceededError(history.location, len(history), bound)


def _ensure_recursion(depth: int) -> None:
    needed = depth * 3 + 200
    if sys.getrecursionlimit() < needed:
        sys.setrecursionlimit(needed)


def _finish(history: History, model: CoherenceModel, found: bool, order: List[WitnessStep],
            dead: _DeadEnd, states: int) -> Verdict:
    verdict = Verdict(
        location=history.location,
        model=model,
        accepted=found,
        witness=history.init_seqs + list(order) if found else None,
        culprit=None if found else dead.culprit,
        rule=None if found else dead.rule,
        allowed=() if found else dead.allowed,
        states=states,
        history=history,
    )
    log_with_context(
        logger, logging.DEBUG, "Checked history",
        location=history.location, model=model.value, accepted=found, states=states,
    )
    return verdict


# ============================================================================
# Full coherence
# ============================================================================

def check_full(history: History, bound: Optional[int] = None) -> Verdict:
    """
    Check a history against full cache coherence.

    Accepted iff some total order extending per-processor order and the
    recorded edges makes every read return the immediately preceding write.
    Flushes and evictions have no effect.

    Args:
        history: Per-location history
        bound: Maximum events after the init prefix (CHECKER_EVENT_BOUND)

    Returns:
        Verdict

    Raises:
        HistoryBoundExceededError: If the history exceeds the bound
    """
    _check_bound(history, get_settings().CHECKER_EVENT_BOUND if bound is None else bound)
    streams = _Streams(history)
    _ensure_recursion(len(history))
    failed: Set[Tuple[Tuple[int, ...], int]] = set()
    order: List[WitnessStep] = []
    dead = _DeadEnd()

    def dfs(pos: Tuple[int, ...], last: int, depth: int) -> bool:
        if streams.done(pos):
            return True
        key = (pos, last)
        if key in failed:
            return False
        blocked = []
        for t, e in streams.enabled(pos):
            observed = e.read_value
            if observed is not None and observed != last:
                blocked.append((e.seq, RULE_FULL, (last,)))
                continue
            written = e.written_value
            order.append(e.seq)
            if dfs(streams.advance(pos, t), last if written is None else written, depth + 1):
                return True
            order.pop()
        dead.note(depth, blocked)
        failed.add(key)
        return False

    found = dfs(streams.start, history.init_value, 0)
    return _finish(history, CoherenceModel.FULL, found, order, dead, len(failed))


# ============================================================================
# Operational weak / federated coherence
# ============================================================================

Line = Optional[Tuple[int, bool]]  # (value, dirty) or None when Invalid


class _Domains:
    """Maps events to coherence domains (processors for weak, nodes for federated)."""

    def __init__(self, history: History, per_processor: bool):
        self.per_processor = per_processor
        body = history.body
        self._node_procs: Dict[str, List[str]] = defaultdict(list)
        for e in body:
            if e.proc != SYSTEM_PROC and e.proc not in self._node_procs[e.node]:
                self._node_procs[e.node].append(e.proc)
        if per_processor:
            names = {p for procs in self._node_procs.values() for p in procs}
        else:
            names = {e.node for e in body}
        self.names = sorted(names, key=_proc_sort_key)
        self.index = {n: i for i, n in enumerate(self.names)}

    def of(self, e: Event) -> Tuple[int, ...]:
        """Domains an event acts on; a weak-model eviction flushes its node's processors."""
        if not self.per_processor:
            return (self.index[e.node],)
        if e.proc == SYSTEM_PROC:
            return tuple(self.index[p] for p in self._node_procs.get(e.node, []))
        return (self.index[e.proc],)


def _step(e: Event, doms: Tuple[int, ...], mem: int, lines: Tuple[Line, ...]):
    """
    Apply one event to (memory, lines).

    Returns:
        (mem, lines) after the event, or (None, rule, allowed) when a read
        cannot return the recorded value
    """
    if e.is_flush:
        new_lines = list(lines)
        for d in doms:
            line = new_lines[d]
            if line is not None and line[1]:
                mem = line[0]
            new_lines[d] = None
        return mem, tuple(new_lines)

    d = doms[0]
    line = lines[d]
    new_lines = list(lines)
    observed = e.read_value
    if observed is not None:
        current = line[0] if line is not None else mem
        if current != observed:
            return None, (RULE_CACHED if line is not None else RULE_MEMORY), (current,)
        if line is None:
            line = (current, False)
            new_lines[d] = line
    written = e.written_value
    if written is not None:
        new_lines[d] = (written, True)
    return mem, tuple(new_lines)


def _operational(
    history: History, model: CoherenceModel, per_processor: bool, allow_evictions: bool
) -> Verdict:
    streams = _Streams(history)
    domains = _Domains(history, per_processor)
    _ensure_recursion(len(history) * (len(domains.names) + 1))
    failed: Set = set()
    order: List[WitnessStep] = []
    dead = _DeadEnd()

    def dfs(pos, mem, lines, depth) -> bool:
        if streams.done(pos):
            return True
        key = (pos, mem, lines)
        if key in failed:
            return False
        blocked = []
        for t, e in streams.enabled(pos):
            result = _step(e, domains.of(e), mem, lines)
            if result[0] is None:
                blocked.append((e.seq, result[1], result[2]))
                continue
            order.append(e.seq)
            if dfs(streams.advance(pos, t), result[0], result[1], depth + 1):
                return True
            order.pop()
        if allow_evictions:
            for d, line in enumerate(lines):
                if line is None:
                    continue
                new_lines = lines[:d] + (None,) + lines[d + 1:]
                order.append(flush_marker(domains.names[d]))
                if dfs(pos, line[0] if line[1] else mem, new_lines, depth):
                    return True
                order.pop()
        dead.note(depth, blocked)
        failed.add(key)
        return False

    start_lines = tuple(None for _ in domains.names)
    found = dfs(streams.start, history.init_value, start_lines, 0)
    return _finish(history, model, found, order, dead, len(failed))


def check_weak(history: History, bound: Optional[int] = None) -> Verdict:
    """
    Check a history against weak coherence (per-processor caches).

    Every processor is its own coherence domain, flushes come only from the
    history, and the init prefix flushes every processor.

    Raises:
        HistoryBoundExceededError: If the history exceeds the bound
    """
    _check_bound(history, get_settings().CHECKER_EVENT_BOUND if bound is None else bound)
    return _operational(history, CoherenceModel.WEAK, per_processor=True, allow_evictions=False)


def check_federated(
    history: History,
    node_map: Optional[Dict[str, str]] = None,
    bound: Optional[int] = None,
    allow_evictions: bool = True,
) -> Verdict:
    """
    Check a history against federated coherence.

    Interleaves events respecting per-processor order and edges while
    maintaining per-node line states and memory like the simulator; before
    any step any node may be flushed by the system.

    Args:
        history: Per-location history
        node_map: Processor to node override (e.g. singleton nodes)
        bound: Maximum events after the init prefix (CHECKER_EVENT_BOUND)
        allow_evictions: Whether system-inserted flushes are allowed

    Returns:
        Verdict

    Raises:
        HistoryBoundExceededError: If the history exceeds the bound
    """
    _check_bound(history, get_settings().CHECKER_EVENT_BOUND if bound is None else bound)
    return _operational(
        remap_nodes(history, node_map), CoherenceModel.FEDERATED,
        per_processor=False, allow_evictions=allow_evictions,
    )


def remap_nodes(history: History, node_map: Optional[Dict[str, str]]) -> History:
    """Re-home processors onto the nodes of `node_map` (evictions follow their node's processors)."""
    if not node_map:
        return history
    missing = {e.proc for e in history.body if e.proc != SYSTEM_PROC} - set(node_map)
    if missing:
        raise ValueError(f"node_map lacks processors: {sorted(missing)}")
    events = []
    for e in history.events:
        if e.is_init or e.proc == SYSTEM_PROC:
            events.append(e)
        else:
            events.append(replace(e, node=node_map[e.proc]))
    nm = {p: node_map[p] for p in history.node_map if p in node_map}
    nm.update({e.proc: node_map[e.proc] for e in history.body if e.proc != SYSTEM_PROC})
    return History(location=history.location, events=events, node_map=nm)


def singleton_nodes(history: History) -> Dict[str, str]:
    """Node map placing every processor on its own node."""
    return {e.proc: e.proc for e in history.body if e.proc != SYSTEM_PROC}


# ============================================================================
# Axiomatic federated coherence
# ============================================================================

@dataclass(frozen=True)
class _Entry:
    """One element of a candidate total order O."""
    domain: str
    kind: str  # "w", "r" or "f"
    value: Optional[int] = None
    init: bool = False


def _rule_pick(order: Sequence[_Entry], domain: str) -> Tuple[int, str]:
    """
    Value a read by `domain` returns at the end of `order`.

    Rule 2(a): the domain's last operation is a write or read of v -> v.
    Rule 2(b): it is a flush -> the value of the last write, by the flushing
    domain, preceding the last write-back flush. A flush by a domain with no
    write since its previous flush leaves memory untouched and is skipped.
    The init flush counts as a flush by every domain and writes back v0.
    """
    for entry in reversed(order):
        if entry.init and entry.kind == "f":
            break
        if entry.domain != domain or entry.init:
            continue
        if entry.kind in ("w", "r"):
            return entry.value, RULE_CACHED
        break
    return _last_written_back(order), RULE_MEMORY


def _last_written_back(order: Sequence[_Entry]) -> int:
    for i in range(len(order) - 1, -1, -1):
        flush = order[i]
        if flush.kind != "f":
            continue
        if flush.init:
            return order[i - 1].value
        for j in range(i - 1, -1, -1):
            prior = order[j]
            if prior.init and prior.kind == "f":
                break
            if prior.domain != flush.domain:
                continue
            if prior.kind == "f":
                break
            if prior.kind == "w":
                return prior.value
    raise AssertionError("order lacks the init prefix")


def _dirty(order: Sequence[_Entry], domain: str) -> bool:
    for entry in reversed(order):
        if entry.init and entry.kind == "f":
            return False
        if entry.domain != domain or entry.init:
            continue
        if entry.kind == "f":
            return False
        if entry.kind == "w":
            return True
    return False


def _entries_for(e: Event, domain: str) -> List[_Entry]:
    if e.is_flush:
        return [_Entry(domain, "f")]
    out = []
    if e.read_value is not None:
        out.append(_Entry(domain, "r", e.read_value))
    if e.written_value is not None:
        out.append(_Entry(domain, "w", e.written_value))
    return out


def check_federated_axiomatic(
    history: History,
    node_map: Optional[Dict[str, str]] = None,
    flush_budget: int = 1,
    bound: Optional[int] = None,
) -> Verdict:
    """
    Decide federated coherence by building total orders with inserted flushes.

    Reads are evaluated with rules 2(a)/2(b) on the explicit order. Between
    two consecutive history events each node may receive up to
    `flush_budget` inserted flushes.

    Args:
        history: Per-location history
        node_map: Processor to node override
        flush_budget: Inserted flushes per node per gap (>= 0)
        bound: Maximum events after the init prefix (AXIOMATIC_EVENT_BOUND)

    Returns:
        Verdict

    Raises:
        HistoryBoundExceededError: If the history exceeds the bound
        ValueError: If flush_budget is negative
    """
    if flush_budget < 0:
        raise ValueError("flush_budget must be >= 0")
    _check_bound(history, get_settings().AXIOMATIC_EVENT_BOUND if bound is None else bound)
    history = remap_nodes(history, node_map)
    streams = _Streams(history)
    domains = sorted({e.node for e in history.body}, key=_proc_sort_key)
    _ensure_recursion(len(history) * (len(domains) * flush_budget + 1))

    order: List[_Entry] = [
        _Entry("init", "w", history.init_value, init=True),
        _Entry("init", "f", init=True),
    ]
    witness: List[WitnessStep] = []
    failed: Set = set()
    dead = _DeadEnd()

    def summary() -> Tuple:
        cached = []
        for d in domains:
            value, rule = _rule_pick(order, d)
            cached.append((value if rule == RULE_CACHED else None, _dirty(order, d)))
        return _last_written_back(order), tuple(cached)

    def dfs(pos, gap: Tuple[int, ...], depth: int) -> bool:
        if streams.done(pos):
            return True
        key = (pos, gap, summary())
        if key in failed:
            return False
        blocked = []
        for t, e in streams.enabled(pos):
            entries = _entries_for(e, e.node)
            if e.read_value is not None:
                value, rule = _rule_pick(order, e.node)
                if value != e.read_value:
                    blocked.append((e.seq, rule, (value,)))
                    continue
            order.extend(entries)
            witness.append(e.seq)
            if dfs(streams.advance(pos, t), tuple(0 for _ in domains), depth + 1):
                return True
            witness.pop()
            del order[len(order) - len(entries):]
        for d, name in enumerate(domains):
            if gap[d] >= flush_budget:
                continue
            order.append(_Entry(name, "f"))
            witness.append(flush_marker(name))
            if dfs(pos, gap[:d] + (gap[d] + 1,) + gap[d + 1:], depth):
                return True
            witness.pop()
            order.pop()
        dead.note(depth, blocked)
        failed.add(key)
        return False

    found = dfs(streams.start, tuple(0 for _ in domains), 0)
    return _finish(history, CoherenceModel.FEDERATED_AXIOMATIC, found, witness, dead, len(failed))


# ============================================================================
# Witness validation and dispatch
# ============================================================================

def validate_witness(
    history: History,
    model: Union[CoherenceModel, str],
    witness: Sequence[WitnessStep],
    node_map: Optional[Dict[str, str]] = None,
) -> bool:
    """
    Replay a witness order in one pass and check every read.

    Independent of the searches: it checks that the order is a permutation
    of the history respecting stream order and edges, then replays the
    model's cache semantics directly.
    """
    model = CoherenceModel(model)
    if model in (CoherenceModel.FEDERATED, CoherenceModel.FEDERATED_AXIOMATIC):
        history = remap_nodes(history, node_map)
    events = history.by_seq()
    init = history.init_seqs
    if list(witness[: len(init)]) != init:
        return False

    placed: Set[int] = set(init)
    last_in_stream: Dict[str, int] = {}
    memory = history.init_value
    latest = history.init_value
    cache: Dict[str, Tuple[int, bool]] = {}
    node_procs: Dict[str, Set[str]] = defaultdict(set)
    for e in history.body:
        if e.proc != SYSTEM_PROC:
            node_procs[e.node].add(e.proc)

    def domains_of(e: Event) -> List[str]:
        if model is CoherenceModel.WEAK:
            return sorted(node_procs[e.node]) if e.proc == SYSTEM_PROC else [e.proc]
        return [e.node]

    for step in witness[len(init):]:
        if isinstance(step, str):
            match = _MARKER.match(step)
            if not match or model not in (CoherenceModel.FEDERATED, CoherenceModel.FEDERATED_AXIOMATIC):
                return False
            line = cache.pop(match.group(1), None)
            if line is not None and line[1]:
                memory = line[0]
            continue
        e = events.get(step)
        if e is None or step in placed or e.is_init:
            return False
        stream = thread_of(e)
        previous = [x.seq for x in history.body if thread_of(x) == stream and x.seq < e.seq]
        if previous and previous[-1] not in placed:
            return False
        if any(src not in placed for src in e.after):
            return False
        placed.add(step)

        if model is CoherenceModel.FULL:
            if e.read_value is not None and e.read_value != latest:
                return False
            if e.written_value is not None:
                latest = e.written_value
            continue

        if e.is_flush:
            for d in domains_of(e):
                line = cache.pop(d, None)
                if line is not None and line[1]:
                    memory = line[0]
            continue
        d = domains_of(e)[0]
        if e.read_value is not None:
            line = cache.get(d)
            current = line[0] if line is not None else memory
            if current != e.read_value:
                return False
            if line is None:
                cache[d] = (current, False)
        if e.written_value is not None:
            cache[d] = (e.written_value, True)

    return placed == set(events)


def check(
    history: History,
    model: Union[CoherenceModel, str],
    bound: Optional[int] = None,
    node_map: Optional[Dict[str, str]] = None,
    allow_evictions: bool = True,
) -> Verdict:
    """Dispatch to the checker for `model`."""
    model = CoherenceModel(model)
    if model is CoherenceModel.FULL:
        return check_full(history, bound)
    if model is CoherenceModel.WEAK:
        return check_weak(history, bound)
    if model is CoherenceModel.FEDERATED:
        return check_federated(history, node_map, bound, allow_evictions)
    return check_federated_axiomatic(history, node_map, bound=bound)


# ============================================================================
# Explanations
# ============================================================================

def _describe(e: Event) -> str:
    if e.op is OpKind.WRITE:
        what = f"write({e.value})"
    elif e.op is OpKind.READ:
        what = f"read -> {e.value}"
    elif e.op is OpKind.RMW and e.rmw.value == "cas":
        outcome = "ok" if e.success else "failed"
        what = f"cas({e.expected} -> {e.new}) {outcome}, observed {e.observed}"
    elif e.op is OpKind.RMW:
        what = f"faa(+{e.delta}) old {e.old}"
    elif e.op is OpKind.EVICT:
        what = "evict"
    else:
        what = "flush"
    return f"#{e.seq} {e.proc}@{e.node} {what}"


def explain(v: Verdict) -> str:
    """
    Human-readable account of a verdict.

    Accepted verdicts list the witness order with each coherence domain's
    cached value after every step; rejected verdicts name the culprit read
    and the rule it violates.
    """
    history = v.history
    header = f"{v.location} [{v.model.value}]"
    if history is not None and len(history) == 0:
        return f"{header}: vacuously accepted (no operations besides initialization)"

    if not v.accepted:
        if v.culprit is None:
            return f"{header}: rejected"
        event = history.by_seq().get(v.culprit) if history else None
        described = _describe(event) if event else f"#{v.culprit}"
        allowed = ", ".join(str(a) for a in v.allowed) or "nothing"
        return (
            f"{header}: rejected at {described}; rule {v.rule} allows {allowed} "
            f"at the furthest point any order reaches"
        )

    lines = [f"{header}: accepted, witness order:"]
    events = history.by_seq() if history else {}
    per_processor = v.model is CoherenceModel.WEAK
    cache: Dict[str, Optional[int]] = {}
    memory = history.init_value if history else None
    lines.append(f"  init value {memory}")
    for step in (v.witness or [])[len(history.init_seqs) if history else 0:]:
        if isinstance(step, str):
            domain = step.split("@", 1)[1]
            lines.append(f"  inserted flush of {domain}")
            cache.pop(domain, None)
            continue
        e = events[step]
        domain = e.proc if per_processor else e.node
        if e.is_flush:
            cache.pop(domain, None)
        elif e.written_value is not None:
            cache[domain] = e.written_value
        elif e.read_value is not None:
            cache[domain] = e.read_value
        state = ", ".join(f"{d}={val}" for d, val in sorted(cache.items())) or "all invalid"
        if v.model is CoherenceModel.FULL:
            lines.append(f"  {_describe(e)}")
        else:
            lines.append(f"  {_describe(e)}   [cached: {state}]")
    return "\n".join(lines)
