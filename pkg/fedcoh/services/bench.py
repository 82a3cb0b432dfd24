"""
Coherence overhead: analytic model, latency fit and contention simulation.

The analytic model sums a per-core slope over cores filled in topology
order: one slope inside the first NUMA domain, another for the rest of
the first node, and a latency-proportional slope for cores on further
nodes. The simulator instead plays out a shared counter whose line moves
between owners, with simpy driving the clock.
"""
import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import simpy

from fedcoh.config.settings import get_settings
from fedcoh.exceptions import BenchParameterError
from fedcoh.schemas.bench import ContentionParamsDoc, OverheadModelDoc
from fedcoh.services.topology import (
    ProcId,
    Topology,
    comm_latency,
    extended_topology,
    node_of,
    numa_domain_of,
    shape_of,
)
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)

CSV_HEADER = ("cores", "overhead")

CurvePoint = Tuple[int, float]
TransferCost = Callable[[ProcId, ProcId], float]


@dataclass(frozen=True)
class OverheadModel:
    slope_within_numa: float
    slope_cross_numa: float
    derivative_per_latency: float
    base: float

    def __post_init__(self):
        for name in ("slope_within_numa", "slope_cross_numa", "derivative_per_latency", "base"):
            if not getattr(self, name) > 0:
                raise BenchParameterError(f"{name} must be > 0, got {getattr(self, name)}")

    @classmethod
    def default(cls) -> "OverheadModel":
        s = get_settings()
        return cls(s.SLOPE_WITHIN_NUMA, s.SLOPE_CROSS_NUMA, s.DERIVATIVE_PER_LATENCY, s.OVERHEAD_BASE)

    @classmethod
    def from_json(cls, text: Union[str, bytes]) -> "OverheadModel":
        """
        Raises:
            BenchParameterError: If the document is malformed or a value is not positive
        """
        try:
            doc = OverheadModelDoc.model_validate_json(text)
        except ValueError as e:
            raise BenchParameterError(f"Malformed overhead model: {e}") from e
        d = cls.default()
        return cls(
            doc.slope_within_numa or d.slope_within_numa,
            doc.slope_cross_numa or d.slope_cross_numa,
            doc.derivative_per_latency or d.derivative_per_latency,
            doc.base or d.base,
        )


@dataclass
class OverheadCurve:
    """Overhead per core count, nondecreasing."""
    points: List[CurvePoint] = field(default_factory=list)
    shape: Optional[Tuple[int, int, int, int]] = None
    lat_disagg: Optional[float] = None

    def overhead_at(self, cores: int) -> float:
        for n, value in self.points:
            if n == cores:
                return value
        raise BenchParameterError(f"Curve has no point for {cores} cores")

    @property
    def cores(self) -> List[int]:
        return [n for n, _ in self.points]

    @property
    def overheads(self) -> List[float]:
        return [v for _, v in self.points]


def _core_slope(model: OverheadModel, t: Topology, first: ProcId, p: ProcId, lat_disagg: float) -> float:
    if node_of(t, p) != node_of(t, first):
        return model.derivative_per_latency * lat_disagg
    if numa_domain_of(t, p) != numa_domain_of(t, first):
        return model.slope_cross_numa
    return model.slope_within_numa


def model_overhead(
    model: OverheadModel, t: Topology, cores: int, lat_disagg: Optional[float] = None
) -> OverheadCurve:
    """
    Analytic overhead for 1..cores cores.

    Args:
        model: Slopes and base
        t: Uniform topology; grown by whole nodes when it has too few processors
        cores: Largest core count
        lat_disagg: Cross-node latency in ns (defaults to the topology's)

    Raises:
        BenchParameterError: If cores < 1 or lat_disagg <= 0
    """
    if cores < 1:
        raise BenchParameterError(f"cores must be >= 1, got {cores}")
    lat = t.lat_disagg if lat_disagg is None else lat_disagg
    if lat <= 0:
        raise BenchParameterError(f"lat_disagg must be > 0, got {lat}")
    grown = extended_topology(t, cores)
    procs = grown.procs[:cores]
    overhead = model.base
    points: List[CurvePoint] = [(1, overhead)]
    for n, p in enumerate(procs[1:], start=2):
        overhead += _core_slope(model, grown, procs[0], p, lat)
        points.append((n, overhead))
    log_with_context(logger, logging.INFO, "Modeled overhead curve", cores=cores, lat_disagg=lat,
                     overhead=round(overhead, 3))
    return OverheadCurve(points=points, shape=shape_of(grown), lat_disagg=lat)


def latency_sweep(
    model: OverheadModel, t: Topology, cores: int, latencies: Iterable[float]
) -> List[OverheadCurve]:
    """One analytic curve per disaggregated latency."""
    return [model_overhead(model, t, cores, lat) for lat in latencies]


def derivative_fit(points: Sequence[Tuple[float, float]]) -> float:
    """
    Least-squares fit of slope = k * latency through the origin.

    Raises:
        BenchParameterError: If points is empty or a latency is not positive
    """
    if not points:
        raise BenchParameterError("derivative_fit needs at least one point")
    data = np.asarray(points, dtype=float)
    latency, slope = data[:, 0], data[:, 1]
    if np.any(latency <= 0):
        raise BenchParameterError("Latencies must be > 0")
    k, *_ = np.linalg.lstsq(latency[:, None], slope, rcond=None)
    return float(k[0])


# ----------------------------------------------------------------------
# Contention simulation
# ----------------------------------------------------------------------


@dataclass
class ContentionParams:
    placement: List[ProcId]
    local_cost_ns: float = field(default_factory=lambda: get_settings().SIM_LOCAL_COST_NS)
    duration_ns: float = field(default_factory=lambda: get_settings().SIM_DURATION_NS)
    seed: int = 0
    transfer_cost: Optional[TransferCost] = None

    def __post_init__(self):
        if not self.placement:
            raise BenchParameterError("Contention placement is empty")
        if self.local_cost_ns <= 0 or self.duration_ns <= 0:
            raise BenchParameterError("local cost and duration must be > 0")

    @classmethod
    def from_doc(cls, doc: ContentionParamsDoc) -> "ContentionParams":
        s = get_settings()
        return cls(
            placement=list(doc.placement),
            local_cost_ns=doc.local_cost_ns or s.SIM_LOCAL_COST_NS,
            duration_ns=doc.duration_ns or s.SIM_DURATION_NS,
            seed=doc.seed,
        )

    @classmethod
    def from_json(cls, text: Union[str, bytes]) -> "ContentionParams":
        """
        Raises:
            BenchParameterError: If the document is malformed
        """
        try:
            doc = ContentionParamsDoc.model_validate_json(text)
        except ValueError as e:
            raise BenchParameterError(f"Malformed contention parameters: {e}") from e
        return cls.from_doc(doc)


@dataclass
class SimResult:
    ratio: float
    shared_ops: int
    baseline_ops: int
    transfers: int


class _ContendedLine:
    """
    One cache line with a single holder at a time.

    On every release the next holder is drawn uniformly from the waiting
    cores, the releasing core included when it has already asked again.
    """

    def __init__(self, env: simpy.Environment, owner: ProcId, rng: np.random.Generator):
        self.env = env
        self.owner = owner
        self.rng = rng
        self.busy = False
        self.waiters: List[Tuple[ProcId, simpy.Event]] = []

    def request(self, p: ProcId) -> simpy.Event:
        grant = self.env.event()
        self.waiters.append((p, grant))
        self._dispatch()
        return grant

    def release(self) -> None:
        self.busy = False
        self._dispatch()

    def _dispatch(self) -> None:
        if self.busy or not self.waiters:
            return
        _, grant = self.waiters.pop(int(self.rng.integers(len(self.waiters))))
        self.busy = True
        grant.succeed()


def _run_shared_counter(params: ContentionParams, offsets: Sequence[float], transfer: TransferCost,
                        rng: np.random.Generator) -> Tuple[int, int]:
    """Run the shared increment loop for `duration_ns`; returns (ops, transfers)."""
    c = params.local_cost_ns
    env = simpy.Environment()
    line = _ContendedLine(env, params.placement[0], rng)
    state = {"ops": 0, "transfers": 0}

    def core(p: ProcId, offset: float):
        yield env.timeout(offset)
        grant = line.request(p)
        while True:
            yield grant
            previous, line.owner = line.owner, p
            if previous != p:
                state["transfers"] += 1
                yield env.timeout(transfer(p, previous))
            yield env.timeout(c)
            state["ops"] += 1
            # ask again before handing the line on
            grant = line.request(p)
            line.release()

    for p, offset in zip(params.placement, offsets):
        env.process(core(p, float(offset)))
    env.run(until=params.duration_ns)
    return state["ops"], state["transfers"]


def _private_ops(params: ContentionParams, offsets: np.ndarray) -> int:
    """Increments finished before `duration_ns` when every core owns a private line."""
    remaining = (params.duration_ns - offsets) / params.local_cost_ns
    return int(np.maximum(np.ceil(remaining) - 1, 0).sum())


def simulate_contention(params: ContentionParams, t: Topology) -> SimResult:
    """
    Play out concurrent atomic increments of one shared line.

    The line has one holder at a time. A core that receives the line from
    another core pays the transfer cost while holding it, then the local
    cost. The next holder is a seeded draw among the waiting cores, so a
    placement spread over more domains sees more distant transfers. The
    baseline is the same loop with a private line per core.
    """
    for p in params.placement:
        t.placement(p)
    transfer = params.transfer_cost or (lambda a, b: comm_latency(t, a, b))
    rng = np.random.default_rng(params.seed)
    offsets = rng.uniform(0.0, params.local_cost_ns, size=len(params.placement))
    offsets[0] = 0.0

    shared_ops, transfers = _run_shared_counter(params, offsets, transfer, rng)
    baseline_ops = _private_ops(params, offsets)
    ratio = baseline_ops / max(shared_ops, 1)
    return SimResult(ratio=ratio, shared_ops=shared_ops, baseline_ops=baseline_ops, transfers=transfers)


def sim_overhead(params: ContentionParams, t: Topology) -> float:
    """
    Ratio of the private-counter rate to the shared-counter rate.

    Raises:
        BenchParameterError: If the placement is empty
    """
    result = simulate_contention(params, t)
    log_with_context(logger, logging.DEBUG, "Contention simulated", cores=len(params.placement),
                     ratio=round(result.ratio, 3), transfers=result.transfers)
    return result.ratio


def _domain_procs(t: Topology, level: str) -> List[Tuple[ProcId, ...]]:
    if level == "soft":
        return [s.procs for node in t.nodes for numa in node.numa_domains for s in numa.soft_domains]
    if level == "numa":
        return [
            tuple(p for s in numa.soft_domains for p in s.procs)
            for node in t.nodes
            for numa in node.numa_domains
        ]
    raise BenchParameterError(f"Unknown domain level {level!r}, expected 'soft' or 'numa'")


def placement_for_domains(t: Topology, cores: int, domains: int, level: str = "soft") -> List[ProcId]:
    """
    Spread `cores` processors round-robin over the first `domains` soft-NUMA
    (or NUMA) domains of the topology.

    Raises:
        BenchParameterError: If the topology lacks the domains or cores
    """
    groups = _domain_procs(t, level)
    if domains < 1 or domains > len(groups):
        raise BenchParameterError(f"Topology has {len(groups)} {level} domains, asked for {domains}")
    chosen = groups[:domains]
    placement: List[ProcId] = []
    depth = 0
    while len(placement) < cores:
        progressed = False
        for procs in chosen:
            if depth < len(procs) and len(placement) < cores:
                placement.append(procs[depth])
                progressed = True
        if not progressed:
            raise BenchParameterError(f"{domains} domains hold fewer than {cores} cores")
        depth += 1
    return placement


# ----------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------


def emit_curve_csv(curve: OverheadCurve, out: Union[str, Path, TextIO]) -> None:
    """Write `cores,overhead` rows; `out` is a path or an open text file."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            emit_curve_csv(curve, fh)
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for n, value in curve.points:
        writer.writerow((n, repr(float(value))))


def curve_to_csv(curve: OverheadCurve) -> str:
    buf = io.StringIO()
    emit_curve_csv(curve, buf)
    return buf.getvalue()


def parse_curve_csv(source: Union[str, Path, TextIO]) -> OverheadCurve:
    """
    Read a curve written by emit_curve_csv.

    Raises:
        BenchParameterError: If the header or a row is malformed
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_curve_csv(fh)
    rows = list(csv.reader(io.StringIO(source) if isinstance(source, str) else source))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise BenchParameterError(f"CSV header must be {','.join(CSV_HEADER)}")
    points: List[CurvePoint] = []
    for line_no, row in enumerate(rows[1:], start=2):
        try:
            n, value = row
            points.append((int(n), float(value)))
        except ValueError as e:
            raise BenchParameterError(f"Malformed CSV row {line_no}: {row}") from e
    return OverheadCurve(points=points)


def overhead_at(model: OverheadModel, t: Topology, cores: int, lat_disagg: Optional[float] = None) -> float:
    """Analytic overhead at exactly `cores` cores."""
    return model_overhead(model, t, cores, lat_disagg).points[-1][1]


def contention_curve(params: ContentionParams, t: Topology) -> OverheadCurve:
    """Simulated ratio for each prefix of the placement, 1..len(placement) cores."""
    points: List[CurvePoint] = []
    for n in range(1, len(params.placement) + 1):
        prefix = replace(params, placement=params.placement[:n])
        points.append((n, sim_overhead(prefix, t)))
    log_with_context(logger, logging.INFO, "Simulated overhead curve", cores=len(params.placement),
                     seed=params.seed)
    return OverheadCurve(points=points, shape=shape_of(t), lat_disagg=t.lat_disagg)


def sim_curve(t: Topology, cores: int, domains: int, seed: int = 0,
              local_cost_ns: Optional[float] = None, duration_ns: Optional[float] = None) -> OverheadCurve:
    """Simulated ratio for 1..cores cores spread over `domains` soft-NUMA domains."""
    s = get_settings()
    params = ContentionParams(
        placement=placement_for_domains(t, cores, domains),
        local_cost_ns=local_cost_ns or s.SIM_LOCAL_COST_NS,
        duration_ns=duration_ns or s.SIM_DURATION_NS,
        seed=seed,
    )
    return contention_curve(params, t)
