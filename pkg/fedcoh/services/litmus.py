"""
Litmus catalog: small scenarios with known verdicts under each model.

Each case runs on a fresh memory system, projects per-location histories
from its trace and checks them against full, weak and federated
coherence. A model accepts a run when it accepts every location. Seeds
only change values and the order of independent steps, never the
expected verdicts.
"""
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from fedcoh.config.settings import get_settings
from fedcoh.exceptions import UnknownLitmusCaseError
from fedcoh.schemas.litmus import LitmusReportDoc, Outcome
from fedcoh.schemas.verdict import CoherenceModel
from fedcoh.services.bakery import bakery_acquire, bakery_lock_create, bakery_release
from fedcoh.services.channels import Channel, notify_recv, notify_send
from fedcoh.services.checker import check, project_histories
from fedcoh.services.memcore import MemorySystem, Trace, mem_new
from fedcoh.services.monitors import MutexMonitor
from fedcoh.services.scheduler import Scheduler, SimThread, schedule
from fedcoh.services.topology import build_topology
from fedcoh.utils.logging import get_logger, log_with_context
from fedcoh.workers.executor import ConcurrentExecutor

logger = get_logger(__name__)

CHECKED_MODELS = (CoherenceModel.FULL, CoherenceModel.WEAK, CoherenceModel.FEDERATED)

ACCEPT, REJECT = True, False


@dataclass
class LitmusRun:
    """Trace of one execution plus the case's own postcondition."""
    trace: Trace
    ok: bool = True
    note: str = ""


@dataclass(frozen=True)
class LitmusCase:
    name: str
    title: str
    scenario: Callable[[int], LitmusRun]
    expected: Dict[CoherenceModel, bool]
    randomized: bool = False
    bound: Optional[int] = None


@dataclass
class LitmusReport:
    case: str
    runs: int
    passed: int
    verdicts: Dict[CoherenceModel, Outcome]
    failed_seeds: List[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.runs

    def to_doc(self) -> LitmusReportDoc:
        return LitmusReportDoc(
            case=self.case,
            runs=self.runs,
            passed=self.passed,
            verdicts={model.value: outcome for model, outcome in self.verdicts.items()},
            failed_seeds=self.failed_seeds,
        )

    def to_json(self) -> str:
        return self.to_doc().model_dump_json(by_alias=True, exclude={"failed_seeds"} if self.ok else None)


def _pair(node_count: int, cores: int = 1) -> MemorySystem:
    return mem_new(build_topology(node_count, 1, 1, cores), {"x": 0})


def _value(rng: random.Random) -> int:
    return rng.randint(1, 255)


def _edge(m: MemorySystem, sender: str, receiver: str) -> None:
    """Send a notification from sender to receiver and deliver it at once."""
    ch = Channel(m, m.node_of(sender), m.node_of(receiver))
    notify_send(ch, sender, b"go")
    notify_recv(ch, receiver, 0.0)


# ----------------------------------------------------------------------
# Scenarios. Two nodes n0/n1; p0 on n0 and p1 on n1 unless noted.
# ----------------------------------------------------------------------


def stale_read(seed: int) -> LitmusRun:
    """p1 caches x, p0 writes and flushes, notifies p1, p1 still reads the old x."""
    rng = random.Random(seed)
    m = _pair(2)
    v = _value(rng)
    m.read("p1", "x")
    m.write("p0", "x", v)
    m.flush_line("p0", "x")
    _edge(m, "p0", "p1")
    stale = m.read("p1", "x")
    return LitmusRun(m.take_trace(), ok=stale == 0)


def broken_cas(seed: int) -> LitmusRun:
    """Both nodes CAS x from 0 and both succeed."""
    rng = random.Random(seed)
    m = _pair(2)
    first, second = rng.sample(["p0", "p1"], 2)
    v1, v2 = _value(rng), _value(rng)
    ok1, _ = m.atomic_cas(first, "x", 0, v1)
    ok2, _ = m.atomic_cas(second, "x", 0, v2)
    m.flush_line(first, "x")
    m.flush_line(second, "x")
    return LitmusRun(m.take_trace(), ok=ok1 and ok2)


def broken_faa(seed: int) -> LitmusRun:
    """Two nodes increment x once each; after both flushes x is 1."""
    rng = random.Random(seed)
    m = _pair(2)
    first, second = rng.sample(["p0", "p1"], 2)
    m.atomic_faa(first, "x", 1)
    m.atomic_faa(second, "x", 1)
    m.flush_line(first, "x")
    m.flush_line(second, "x")
    m.flush_line(first, "x")
    final = m.read(first, "x")
    return LitmusRun(m.take_trace(), ok=final == 1, note=f"counter={final}")


def intra_node_faa(seed: int) -> LitmusRun:
    """p0 and p1 share n0; two increments, a flush, and the count is 2."""
    rng = random.Random(seed)
    m = _pair(1, cores=2)
    first, second = rng.sample(["p0", "p1"], 2)
    m.atomic_faa(first, "x", 1)
    m.atomic_faa(second, "x", 1)
    m.flush_all(first)
    final = m.read(first, "x")
    return LitmusRun(m.take_trace(), ok=final == 2, note=f"counter={final}")


def intra_node_read_your_writes(seed: int) -> LitmusRun:
    """p0 writes on n0 without flushing; p1 on the same node reads it after a notification."""
    rng = random.Random(seed)
    m = _pair(1, cores=2)
    writer, reader = rng.sample(["p0", "p1"], 2)
    v = _value(rng)
    m.write(writer, "x", v)
    _edge(m, writer, reader)
    seen = m.read(reader, "x")
    return LitmusRun(m.take_trace(), ok=seen == v)


def lock_handoff_without_data_flush(seed: int) -> LitmusRun:
    """
    The lock word is flushed on release but the protected data is not, so
    the next holder on the other node reads its stale cached copy.
    """
    rng = random.Random(seed)
    m = mem_new(build_topology(2, 1, 1, 1), {"lock": 1, "data": 0})
    v = _value(rng)
    m.read("p1", "data")
    m.write("p0", "data", v)
    m.write("p0", "lock", 0)
    m.flush_line("p0", "lock")
    _edge(m, "p0", "p1")
    m.flush_line("p1", "lock")
    free = m.read("p1", "lock")
    ok, _ = m.atomic_cas("p1", "lock", 0, 1)
    seen = m.read("p1", "data")
    return LitmusRun(m.take_trace(), ok=free == 0 and ok and seen == 0)


def bakery_round(seed: int) -> LitmusRun:
    """Two participants on two nodes, one locked increment each, random schedule."""
    m = mem_new(build_topology(2, 1, 1, 1), {"counter": 0})
    lock = bakery_lock_create(m, ["p0", "p1"])
    monitor = MutexMonitor()

    def worker(p: str) -> SimThread[None]:
        yield from bakery_acquire(lock, p)
        monitor.enter(p)
        m.flush_line(p, "counter")
        value = m.read(p, "counter")
        yield from schedule()
        m.write(p, "counter", value + 1)
        m.flush_line(p, "counter")
        monitor.exit(p)
        bakery_release(lock, p)

    outcome = Scheduler(seed).run([worker("p0"), worker("p1")])
    final = m.memory_value("counter")
    ok = outcome.completed and monitor.violations == 0 and final == 2
    return LitmusRun(m.take_trace(), ok=ok, note=f"counter={final}")


def flush_publish(seed: int) -> LitmusRun:
    """Writer flushes then notifies; reader invalidates then reads the new value."""
    rng = random.Random(seed)
    m = _pair(2)
    v = _value(rng)
    m.read("p1", "x")
    m.write("p0", "x", v)
    m.flush_line("p0", "x")
    _edge(m, "p0", "p1")
    m.flush_line("p1", "x")
    seen = m.read("p1", "x")
    return LitmusRun(m.take_trace(), ok=seen == v)


def _expect(full: bool, weak: bool, federated: bool) -> Dict[CoherenceModel, bool]:
    return {CoherenceModel.FULL: full, CoherenceModel.WEAK: weak, CoherenceModel.FEDERATED: federated}


def litmus_catalog() -> List[LitmusCase]:
    """All litmus cases in catalog order."""
    return [
        LitmusCase("L1", "cross-node stale read after notification", stale_read,
                   _expect(REJECT, ACCEPT, ACCEPT)),
        LitmusCase("L2", "cross-node broken CAS", broken_cas, _expect(REJECT, ACCEPT, ACCEPT)),
        LitmusCase("L3", "cross-node broken FAA", broken_faa, _expect(REJECT, ACCEPT, ACCEPT)),
        LitmusCase("L4", "intra-node FAA", intra_node_faa, _expect(ACCEPT, REJECT, ACCEPT)),
        LitmusCase("L5", "intra-node read-your-writes", intra_node_read_your_writes,
                   _expect(ACCEPT, REJECT, ACCEPT)),
        LitmusCase("L6", "lock handoff without flushing protected data",
                   lock_handoff_without_data_flush, _expect(REJECT, ACCEPT, ACCEPT)),
        LitmusCase("L7", "bakery lock across nodes", bakery_round, _expect(ACCEPT, ACCEPT, ACCEPT),
                   randomized=True, bound=get_settings().LITMUS_EVENT_BOUND),
        LitmusCase("L8", "flush then notify publication", flush_publish, _expect(ACCEPT, ACCEPT, ACCEPT)),
    ]


def litmus_case(name: str) -> LitmusCase:
    """
    Raises:
        UnknownLitmusCaseError: If no case has this name
    """
    for case in litmus_catalog():
        if case.name == name:
            return case
    raise UnknownLitmusCaseError(name)


def evaluate(case: LitmusCase, seed: int) -> Tuple[bool, Dict[CoherenceModel, bool]]:
    """Run a case once and return (passed, accepted-per-model)."""
    run = case.scenario(seed)
    histories = project_histories(run.trace)
    rejected: Dict[CoherenceModel, List[str]] = {}
    for model in CHECKED_MODELS:
        rejected[model] = [
            loc for loc, h in histories.items() if not check(h, model, bound=case.bound).accepted
        ]
    verdicts = {model: not locs for model, locs in rejected.items()}
    passed = run.ok and verdicts == case.expected
    if not passed:
        for model, expected in case.expected.items():
            if verdicts[model] != expected:
                log_with_context(logger, logging.WARNING, "Litmus verdict differs from expectation",
                                 model=model.value, case=case.name, seed=seed,
                                 rejected_locations=rejected[model], expected_accept=expected)
        if not run.ok:
            log_with_context(logger, logging.WARNING, "Litmus postcondition failed", case=case.name,
                             seed=seed, note=run.note)
    return passed, verdicts


def _outcome(seen: Sequence[bool]) -> Outcome:
    if all(seen):
        return Outcome.ACCEPT
    if not any(seen):
        return Outcome.REJECT
    return Outcome.MIXED


def litmus_run(name: str, seed: int = 0, runs: int = 1, workers: int = 1) -> LitmusReport:
    """
    Run a case `runs` times with seeds seed, seed+1, ...

    Runs are independent; with workers > 1 they execute on a thread pool.

    Raises:
        UnknownLitmusCaseError: If no case has this name
        ValueError: If runs < 1
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    case = litmus_case(name)
    passed = 0
    failed: List[int] = []
    seen: Dict[CoherenceModel, List[bool]] = {model: [] for model in CHECKED_MODELS}
    seeds = [seed + k for k in range(runs)]
    if workers > 1:
        outcomes = ConcurrentExecutor(workers).map(lambda s: evaluate(case, s), seeds)
    else:
        outcomes = [evaluate(case, s) for s in seeds]
    for s, (ok, verdicts) in zip(seeds, outcomes):
        passed += ok
        if not ok:
            failed.append(s)
        for model, accepted in verdicts.items():
            seen[model].append(accepted)
    report = LitmusReport(
        case=name,
        runs=runs,
        passed=passed,
        verdicts={model: _outcome(values) for model, values in seen.items()},
        failed_seeds=failed,
    )
    log_with_context(logger, logging.INFO, "Litmus case finished", case=name, runs=runs, passed=passed)
    return report
