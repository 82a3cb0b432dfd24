"""
Node-to-node notification channels.

A channel carries small messages (at most one cache line) from one node to
another, reliably and in FIFO order. Channels are in-process coordination
objects, not part of simulated memory; delivering a message records a
happens-before edge from the sender's latest event to the receiver's next
event in the memory trace.
"""
import logging
import threading
from collections import deque
from dataclasses import dataclass
from typing import Deque, Optional, Union

from fedcoh.exceptions import ChannelUsageError
from fedcoh.services.memcore import MemorySystem
from fedcoh.services.scheduler import SimThread, wait_until
from fedcoh.services.topology import NodeId, ProcId
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)

MAX_MESSAGE_BYTES = 64


@dataclass(frozen=True)
class Message:
    """A delivered notification."""
    payload: bytes
    sender: ProcId
    sent_seq: Optional[int]
    latency_ns: float

    def text(self) -> str:
        return self.payload.decode("utf-8")


class Channel:
    """Reliable FIFO channel from `sender_node` to `receiver_node`."""

    def __init__(
        self,
        m: MemorySystem,
        sender_node: NodeId,
        receiver_node: NodeId,
        latency_ns: Optional[float] = None,
        name: str = "",
    ):
        self.m = m
        self.sender_node = sender_node
        self.receiver_node = receiver_node
        self.latency_ns = m.topology.lat_disagg if latency_ns is None else latency_ns
        self.name = name or f"{sender_node}->{receiver_node}"
        self._buffer: Deque[Message] = deque()
        self._cond = threading.Condition()
        self.sent = 0
        self.delivered = 0

    def has_message(self) -> bool:
        with self._cond:
            return bool(self._buffer)

    def __len__(self) -> int:
        with self._cond:
            return len(self._buffer)


def notify_send(ch: Channel, from_proc: ProcId, msg: Union[bytes, str]) -> None:
    """
    Send a small message.

    Raises:
        ChannelUsageError: If from_proc is not on the sender node or the
            message exceeds one cache line
    """
    if ch.m.node_of(from_proc) != ch.sender_node:
        raise ChannelUsageError(f"{from_proc} is not on sender node {ch.sender_node} of {ch.name}")
    payload = msg.encode("utf-8") if isinstance(msg, str) else bytes(msg)
    if len(payload) > MAX_MESSAGE_BYTES:
        raise ChannelUsageError(f"Message of {len(payload)} bytes exceeds {MAX_MESSAGE_BYTES}")
    message = Message(
        payload=payload, sender=from_proc, sent_seq=ch.m.last_seq(from_proc), latency_ns=ch.latency_ns
    )
    with ch._cond:
        ch._buffer.append(message)
        ch.sent += 1
        ch._cond.notify_all()
    log_with_context(logger, logging.DEBUG, "Notification sent", proc=from_proc, channel=ch.name)


def notify_recv(ch: Channel, to_proc: ProcId, timeout: float = 0.0) -> Optional[Message]:
    """
    Receive the oldest message, waiting up to `timeout` seconds.

    Returns:
        The message, or None when the timeout elapses first

    Raises:
        ChannelUsageError: If to_proc is not on the receiver node
    """
    if ch.m.node_of(to_proc) != ch.receiver_node:
        raise ChannelUsageError(f"{to_proc} is not on receiver node {ch.receiver_node} of {ch.name}")
    with ch._cond:
        if not ch._buffer and timeout > 0:
            ch._cond.wait_for(lambda: bool(ch._buffer), timeout=timeout)
        if not ch._buffer:
            return None
        message = ch._buffer.popleft()
        ch.delivered += 1
    if message.sent_seq is not None:
        ch.m.order_after(to_proc, message.sent_seq)
    return message


def recv_wait(ch: Channel, to_proc: ProcId) -> SimThread[Message]:
    """Block (cooperatively) until a message arrives, then receive it."""
    while True:
        yield from wait_until(ch.has_message)
        message = notify_recv(ch, to_proc, 0.0)
        if message is not None:
            return message
