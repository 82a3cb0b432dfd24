"""
Node ownership of shared data.

An ownership descriptor names a set of locations that move between nodes
as a unit, how the move is published (a message or a flag location in
disaggregated memory) and what the old owner does before letting go.

The policy decides when the unit may move. HANDOFF_ON_PUBLISH lets the
owner hand it over whenever it publishes; HANDOFF_ON_SIGNAL moves it only
in answer to a request signal from the node that wants it, so the
handoff is ordered after that request.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from fedcoh.exceptions import OwnershipError
from fedcoh.services.channels import Channel, notify_recv, notify_send
from fedcoh.services.memcore import MemorySystem
from fedcoh.services.scheduler import SimThread, schedule, wait_until
from fedcoh.services.topology import NodeId, ProcId
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)


class OwnershipPolicy(str, Enum):
    STATIC = "static"
    HANDOFF_ON_SIGNAL = "handoff_on_signal"
    HANDOFF_ON_PUBLISH = "handoff_on_publish"


class Mechanism(str, Enum):
    BY_MESSAGE = "by_message"
    BY_SHARED_FLAG = "by_shared_flag"


class ChangeAction(str, Enum):
    FLUSH_LINES = "flush_lines"
    NOTIFY = "notify"


@dataclass
class OwnershipDescriptor:
    """
    Ownership state of one unit of shared data.

    With BY_SHARED_FLAG the owner's node index lives in `flag_location`.
    `channels` holds node-to-node channels, created on demand, used by
    BY_MESSAGE and by the NOTIFY action; `requests` holds the request
    channels of HANDOFF_ON_SIGNAL.
    """
    m: MemorySystem
    granularity: FrozenSet[str]
    current_owner: NodeId
    policy: OwnershipPolicy = OwnershipPolicy.HANDOFF_ON_PUBLISH
    mechanism: Mechanism = Mechanism.BY_SHARED_FLAG
    actions: Tuple[ChangeAction, ...] = (ChangeAction.FLUSH_LINES,)
    flag_location: Optional[str] = None
    channels: Dict[Tuple[NodeId, NodeId], Channel] = field(default_factory=dict)
    requests: Dict[Tuple[NodeId, NodeId], Channel] = field(default_factory=dict)
    transfers: int = 0

    def channel(self, sender: NodeId, receiver: NodeId) -> Channel:
        key = (sender, receiver)
        if key not in self.channels:
            self.channels[key] = Channel(self.m, sender, receiver, name=f"own:{sender}->{receiver}")
        return self.channels[key]

    def request_channel(self, requester: NodeId, owner: NodeId) -> Channel:
        key = (requester, owner)
        if key not in self.requests:
            self.requests[key] = Channel(self.m, requester, owner, name=f"ownreq:{requester}->{owner}")
        return self.requests[key]

    def owner_code(self, node: NodeId) -> int:
        return self.m.topology.node_ids.index(node)


def ownership_create(
    m: MemorySystem,
    granularity: Iterable[str],
    owner: NodeId,
    policy: OwnershipPolicy = OwnershipPolicy.HANDOFF_ON_PUBLISH,
    mechanism: Mechanism = Mechanism.BY_SHARED_FLAG,
    actions: Iterable[ChangeAction] = (ChangeAction.FLUSH_LINES,),
    flag_location: Optional[str] = None,
) -> OwnershipDescriptor:
    """
    Build a descriptor; allocates the owner flag when needed.

    Raises:
        OwnershipError: For an unknown owner node or empty granularity
    """
    if owner not in m.topology.node_ids:
        raise OwnershipError(f"Unknown owner node {owner}", owner=owner)
    locs = frozenset(granularity)
    if not locs:
        raise OwnershipError("Ownership granularity is empty")
    d = OwnershipDescriptor(
        m=m, granularity=locs, current_owner=owner, policy=policy, mechanism=mechanism,
        actions=tuple(actions), flag_location=flag_location,
    )
    if mechanism is Mechanism.BY_SHARED_FLAG:
        if d.flag_location is None:
            d.flag_location = f"owner.{min(locs)}"
        if not m.has_location(d.flag_location):
            m.allocate(d.flag_location, d.owner_code(owner))
    return d


def _flush_granularity(d: OwnershipDescriptor, p: ProcId) -> None:
    for loc in sorted(d.granularity):
        d.m.flush_line(p, loc)


def ownership_request(d: OwnershipDescriptor, p: ProcId) -> None:
    """
    Ask the current owner to hand the data to p's node.

    Raises:
        OwnershipError: If the policy is not HANDOFF_ON_SIGNAL or p's node
            already owns the data
    """
    node = d.m.node_of(p)
    if d.policy is not OwnershipPolicy.HANDOFF_ON_SIGNAL:
        raise OwnershipError(f"{d.policy.value} ownership takes no requests", owner=d.current_owner)
    if node == d.current_owner:
        raise OwnershipError(f"{node} already owns the data", owner=node)
    notify_send(d.request_channel(node, d.current_owner), p, f"request:{node}")


def _take_request(d: OwnershipDescriptor, new_owner: NodeId, via_proc: ProcId) -> None:
    ch = d.requests.get((new_owner, d.current_owner))
    message = notify_recv(ch, via_proc, 0.0) if ch is not None else None
    if message is None:
        raise OwnershipError(f"{new_owner} has not asked for the data", owner=d.current_owner)


def ownership_transfer(d: OwnershipDescriptor, new_owner: NodeId, via_proc: ProcId) -> None:
    """
    Hand the data to `new_owner`.

    Under HANDOFF_ON_SIGNAL the owner first consumes new_owner's request,
    which orders the handoff after it. The owner's change actions run next
    (flushing the unit's lines), then the new owner is published through
    the descriptor's mechanism.

    Raises:
        OwnershipError: If via_proc is not on the current owner node, the
            policy is static, new_owner is unknown, or new_owner has not
            asked under HANDOFF_ON_SIGNAL
    """
    node = d.m.node_of(via_proc)
    if node != d.current_owner:
        log_with_context(logger, logging.WARNING, "Transfer by non-owner",
                         proc=via_proc, node=node, owner=d.current_owner)
        raise OwnershipError(f"{via_proc} on {node} does not own the data", owner=d.current_owner)
    if new_owner not in d.m.topology.node_ids:
        raise OwnershipError(f"Unknown owner node {new_owner}", owner=d.current_owner)
    if new_owner != node:
        if d.policy is OwnershipPolicy.STATIC:
            raise OwnershipError("Static ownership cannot change hands", owner=d.current_owner)
        if d.policy is OwnershipPolicy.HANDOFF_ON_SIGNAL:
            _take_request(d, new_owner, via_proc)

    if ChangeAction.FLUSH_LINES in d.actions:
        _flush_granularity(d, via_proc)
    if new_owner == node:
        return

    d.current_owner = new_owner
    if d.mechanism is Mechanism.BY_SHARED_FLAG:
        d.m.write(via_proc, d.flag_location, d.owner_code(new_owner))
        d.m.flush_line(via_proc, d.flag_location)
        if ChangeAction.NOTIFY in d.actions:
            notify_send(d.channel(node, new_owner), via_proc, f"owner:{new_owner}")
    else:
        notify_send(d.channel(node, new_owner), via_proc, f"owner:{new_owner}")
    d.transfers += 1
    log_with_context(logger, logging.DEBUG, "Ownership transferred",
                     proc=via_proc, node=node, owner=new_owner, policy=d.policy.value)


def serve_ownership(d: OwnershipDescriptor, p: ProcId) -> SimThread[NodeId]:
    """Owner side of HANDOFF_ON_SIGNAL: wait for a request, then hand over."""
    node = d.m.node_of(p)

    def pending() -> List[Channel]:
        return [ch for (_, owner), ch in list(d.requests.items()) if owner == node and ch.has_message()]

    yield from wait_until(lambda: bool(pending()))
    requester = pending()[0].sender_node
    ownership_transfer(d, requester, p)
    return requester


def await_ownership(d: OwnershipDescriptor, p: ProcId) -> SimThread[None]:
    """
    Wait until p's node has been told it owns the data.

    With a shared flag, p flushes and reads the flag until it names p's
    node; with messages, p waits for an ownership message to its node.
    Under HANDOFF_ON_SIGNAL p also sends the request that lets the owner
    hand over.
    """
    node = d.m.node_of(p)
    asked = d.policy is not OwnershipPolicy.HANDOFF_ON_SIGNAL
    if d.mechanism is Mechanism.BY_SHARED_FLAG:
        target = d.owner_code(node)
        while True:
            d.m.flush_line(p, d.flag_location)
            if d.m.read(p, d.flag_location) == target:
                return
            if not asked and d.current_owner != node:
                ownership_request(d, p)
                asked = True
            yield from schedule()

    if not asked and d.current_owner != node:
        ownership_request(d, p)

    def incoming() -> List[Channel]:
        return [ch for (_, rcv), ch in list(d.channels.items()) if rcv == node]

    while True:
        yield from wait_until(lambda: any(ch.has_message() for ch in incoming()))
        for ch in incoming():
            message = notify_recv(ch, p, 0.0)
            if message is not None and message.text() == f"owner:{node}":
                return
