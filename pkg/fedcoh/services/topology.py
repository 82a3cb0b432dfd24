"""
Machine topology service.

This module provides:
- Immutable topology description (nodes > NUMA > soft-NUMA > processors)
- Deterministic construction from nested counts or a JSON document
- Communication latency by innermost shared grouping level
- Growth by whole nodes for core counts beyond one machine
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from pydantic import ValidationError

from fedcoh.config.settings import get_settings
from fedcoh.exceptions import TopologyError, UnknownProcessorError
from fedcoh.schemas.topology import LatencyDoc, TopologyDoc
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)

ProcId = str
NodeId = str

LEVEL_SELF = "self"
LEVEL_SOFT = "soft"
LEVEL_NUMA = "numa"
LEVEL_CROSS_NUMA = "cross_numa"
LEVEL_DISAGG = "disagg"


def proc_id(index: int) -> ProcId:
    """Render a processor index."""
    return f"p{index}"


def node_id(index: int) -> NodeId:
    """Render a node index."""
    return f"n{index}"


@dataclass(frozen=True)
class SoftNumaDomain:
    """Core complex sharing a last-level cache slice."""
    soft_id: str
    procs: Tuple[ProcId, ...]


@dataclass(frozen=True)
class NumaDomain:
    """NUMA domain (socket) of a node."""
    numa_id: str
    soft_domains: Tuple[SoftNumaDomain, ...]


@dataclass(frozen=True)
class Node:
    """Hardware-coherent unit attached to disaggregated memory."""
    node_id: NodeId
    numa_domains: Tuple[NumaDomain, ...]


@dataclass(frozen=True)
class Topology:
    """
    Processors grouped into soft-NUMA domains, NUMA domains and nodes.

    Immutable after construction; placement lookups are precomputed.
    """
    nodes: Tuple[Node, ...]
    lat_soft: float
    lat_numa: float
    lat_cross_numa: float
    lat_disagg: float
    _place: Dict[ProcId, Tuple[NodeId, str, str]] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        place: Dict[ProcId, Tuple[NodeId, str, str]] = {}
        for node in self.nodes:
            for numa in node.numa_domains:
                for soft in numa.soft_domains:
                    for p in soft.procs:
                        if p in place:
                            raise TopologyError(f"Processor {p} appears twice")
                        place[p] = (node.node_id, numa.numa_id, soft.soft_id)
        if not place:
            raise TopologyError("Topology has no processors")
        _check_latency_order(self.lat_soft, self.lat_numa, self.lat_cross_numa, self.lat_disagg)
        object.__setattr__(self, "_place", place)

    @property
    def procs(self) -> List[ProcId]:
        """All processors in nesting order."""
        return list(self._place)

    @property
    def node_ids(self) -> List[NodeId]:
        return [n.node_id for n in self.nodes]

    def placement(self, p: ProcId) -> Tuple[NodeId, str, str]:
        try:
            return self._place[p]
        except KeyError:
            raise UnknownProcessorError(p) from None

    def __contains__(self, p: object) -> bool:
        return p in self._place

    def __len__(self) -> int:
        return len(self._place)


def _check_latency_order(soft: float, numa: float, cross: float, disagg: float) -> None:
    if not (0 < soft <= numa <= cross <= disagg):
        raise TopologyError(
            "Latencies must satisfy 0 < soft <= numa <= cross_numa <= disagg, got "
            f"{soft}, {numa}, {cross}, {disagg}"
        )


def build_topology(
    nodes: int,
    numa_per_node: int = 1,
    soft_per_numa: int = 1,
    cores_per_soft: int = 1,
    lat_soft: Optional[float] = None,
    lat_numa: Optional[float] = None,
    lat_cross_numa: Optional[float] = None,
    lat_disagg: Optional[float] = None,
) -> Topology:
    """
    Build a uniform topology from nested counts.

    Processors are numbered 0..N-1 in nesting order, so consecutive ids
    share the innermost groupings.

    Args:
        nodes: Number of nodes
        numa_per_node: NUMA domains per node
        soft_per_numa: Soft-NUMA domains per NUMA domain
        cores_per_soft: Cores per soft-NUMA domain
        lat_soft: Same soft-NUMA latency override (ns)
        lat_numa: Same NUMA latency override (ns)
        lat_cross_numa: Cross-NUMA latency override (ns)
        lat_disagg: Cross-node latency override (ns)

    Returns:
        Topology

    Raises:
        TopologyError: If a count is below 1 or latencies are out of order
    """
    counts = {
        "nodes": nodes,
        "numa_per_node": numa_per_node,
        "soft_per_numa": soft_per_numa,
        "cores_per_soft": cores_per_soft,
    }
    for name, value in counts.items():
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise TopologyError(f"{name} must be an integer >= 1, got {value!r}")

    settings = get_settings()
    lat_soft = settings.LAT_SOFT_NS if lat_soft is None else lat_soft
    lat_numa = settings.LAT_NUMA_NS if lat_numa is None else lat_numa
    lat_cross_numa = settings.LAT_CROSS_NUMA_NS if lat_cross_numa is None else lat_cross_numa
    lat_disagg = settings.LAT_DISAGG_NS if lat_disagg is None else lat_disagg
    _check_latency_order(lat_soft, lat_numa, lat_cross_numa, lat_disagg)

    next_proc = 0
    numa_index = 0
    soft_index = 0
    built: List[Node] = []
    for n in range(nodes):
        numa_domains = []
        for _ in range(numa_per_node):
            soft_domains = []
            for _ in range(soft_per_numa):
                procs = tuple(proc_id(next_proc + c) for c in range(cores_per_soft))
                next_proc += cores_per_soft
                soft_domains.append(SoftNumaDomain(soft_id=f"s{soft_index}", procs=procs))
                soft_index += 1
            numa_domains.append(NumaDomain(numa_id=f"m{numa_index}", soft_domains=tuple(soft_domains)))
            numa_index += 1
        built.append(Node(node_id=node_id(n), numa_domains=tuple(numa_domains)))

    topology = Topology(
        nodes=tuple(built),
        lat_soft=lat_soft,
        lat_numa=lat_numa,
        lat_cross_numa=lat_cross_numa,
        lat_disagg=lat_disagg,
    )
    log_with_context(
        logger,
        logging.DEBUG,
        "Built topology",
        processors=len(topology),
        nodes=nodes,
        numa_per_node=numa_per_node,
        soft_per_numa=soft_per_numa,
        cores_per_soft=cores_per_soft,
    )
    return topology


def comm_latency(t: Topology, a: ProcId, b: ProcId) -> float:
    """
    Communication latency between two processors.

    Args:
        t: Topology
        a: First processor
        b: Second processor

    Returns:
        Latency in ns of the innermost shared grouping, 0 when a == b

    Raises:
        UnknownProcessorError: If either processor is not in the topology
    """
    return {
        LEVEL_SELF: 0.0,
        LEVEL_SOFT: t.lat_soft,
        LEVEL_NUMA: t.lat_numa,
        LEVEL_CROSS_NUMA: t.lat_cross_numa,
        LEVEL_DISAGG: t.lat_disagg,
    }[shared_level(t, a, b)]


def shared_level(t: Topology, a: ProcId, b: ProcId) -> str:
    """Innermost grouping level shared by two processors."""
    node_a, numa_a, soft_a = t.placement(a)
    node_b, numa_b, soft_b = t.placement(b)
    if a == b:
        return LEVEL_SELF
    if soft_a == soft_b:
        return LEVEL_SOFT
    if numa_a == numa_b:
        return LEVEL_NUMA
    if node_a == node_b:
        return LEVEL_CROSS_NUMA
    return LEVEL_DISAGG


def node_of(t: Topology, p: ProcId) -> NodeId:
    """Node holding processor p."""
    return t.placement(p)[0]


def numa_domain_of(t: Topology, p: ProcId) -> str:
    return t.placement(p)[1]


def soft_domain_of(t: Topology, p: ProcId) -> str:
    return t.placement(p)[2]


def procs_of_node(t: Topology, n: NodeId) -> List[ProcId]:
    """Processors of node n in nesting order."""
    for node in t.nodes:
        if node.node_id == n:
            return [p for numa in node.numa_domains for soft in numa.soft_domains for p in soft.procs]
    raise TopologyError(f"Unknown node: {n}")


def node_map(t: Topology) -> Dict[ProcId, NodeId]:
    """Processor to node map."""
    return {p: place[0] for p, place in t._place.items()}


def shape_of(t: Topology) -> Tuple[int, int, int, int]:
    """
    Nested counts of a uniform topology.

    Raises:
        TopologyError: If nodes differ in shape
    """
    numa_counts = {len(node.numa_domains) for node in t.nodes}
    soft_counts = {len(numa.soft_domains) for node in t.nodes for numa in node.numa_domains}
    core_counts = {
        len(soft.procs)
        for node in t.nodes
        for numa in node.numa_domains
        for soft in numa.soft_domains
    }
    if len(numa_counts) != 1 or len(soft_counts) != 1 or len(core_counts) != 1:
        raise TopologyError("Topology is not uniform")
    return len(t.nodes), numa_counts.pop(), soft_counts.pop(), core_counts.pop()


def extended_topology(t: Topology, cores: int) -> Topology:
    """
    Grow a uniform topology by whole nodes until it holds `cores` processors.

    Args:
        t: Uniform topology to extend
        cores: Required processor count

    Returns:
        t itself when large enough, otherwise a topology with more nodes
    """
    nodes, numa, soft, per_soft = shape_of(t)
    per_node = numa * soft * per_soft
    needed = max(nodes, -(-cores // per_node))
    if needed == nodes:
        return t
    return build_topology(
        needed, numa, soft, per_soft,
        lat_soft=t.lat_soft,
        lat_numa=t.lat_numa,
        lat_cross_numa=t.lat_cross_numa,
        lat_disagg=t.lat_disagg,
    )


def topology_from_json(doc: Union[str, bytes, Mapping[str, Any], TopologyDoc]) -> Topology:
    """
    Build a topology from its JSON document.

    Args:
        doc: JSON text, parsed mapping or TopologyDoc

    Returns:
        Topology

    Raises:
        TopologyError: If the document is malformed or describes an invalid topology
    """
    try:
        if isinstance(doc, TopologyDoc):
            parsed = doc
        elif isinstance(doc, (str, bytes)):
            parsed = TopologyDoc.model_validate_json(doc)
        else:
            parsed = TopologyDoc.model_validate(dict(doc))
    except (ValidationError, json.JSONDecodeError) as e:
        log_with_context(logger, logging.WARNING, "Rejected topology document", error_type=type(e).__name__)
        raise TopologyError(f"Malformed topology document: {e}") from e

    lat = parsed.lat_ns
    return build_topology(
        parsed.nodes,
        parsed.numa_per_node,
        parsed.soft_per_numa,
        parsed.cores_per_soft,
        lat_soft=lat.soft,
        lat_numa=lat.numa,
        lat_cross_numa=lat.cross_numa,
        lat_disagg=lat.disagg,
    )


def topology_to_json(t: Topology) -> str:
    """Serialize a uniform topology to its JSON document."""
    nodes, numa, soft, cores = shape_of(t)
    doc = TopologyDoc(
        nodes=nodes,
        numa_per_node=numa,
        soft_per_numa=soft,
        cores_per_soft=cores,
        lat_ns=LatencyDoc(
            soft=t.lat_soft, numa=t.lat_numa, cross_numa=t.lat_cross_numa, disagg=t.lat_disagg
        ),
    )
    return doc.model_dump_json()
