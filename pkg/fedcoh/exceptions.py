"""
Custom exception classes for the federated coherence toolkit.

Provides specific exception types for usage errors, malformed inputs and
protocol violations so callers (and the CLI) can map them to exit codes.
"""
from typing import Optional


class FedcohError(Exception):
    """Base exception for all toolkit errors."""
    pass


class TopologyError(FedcohError):
    """Raised when a topology description is invalid."""

    def __init__(self, message: str = "Invalid topology"):
        super().__init__(message)


class UnknownProcessorError(FedcohError):
    """Raised when a processor id is not part of the topology."""

    def __init__(self, proc: str):
        super().__init__(f"Unknown processor: {proc}")
        self.proc = proc


class UnknownLocationError(FedcohError):
    """Raised when an operation names a location that was never initialized."""

    def __init__(self, loc: str):
        super().__init__(f"Unknown location: {loc}")
        self.loc = loc


class DuplicateLocationError(FedcohError):
    """Raised when a location is initialized twice."""

    def __init__(self, loc: str):
        super().__init__(f"Location already initialized: {loc}")
        self.loc = loc


class ValueRangeError(FedcohError):
    """Raised when a value does not fit in an unsigned 64-bit word."""

    def __init__(self, value: int):
        super().__init__(f"Value out of 64-bit unsigned range: {value}")
        self.value = value


class TraceFormatError(FedcohError):
    """Raised when a trace file line cannot be parsed."""

    def __init__(self, detail: str, line_no: Optional[int] = None):
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"Malformed trace {where}{detail}")
        self.line_no = line_no
        self.detail = detail


class HistoryBoundExceededError(FedcohError):
    """Raised when a history is too large for exhaustive checking."""

    def __init__(self, location: str, events: int, bound: int):
        super().__init__(
            f"History for {location} has {events} events, bound exceeded ({bound})"
        )
        self.location = location
        self.events = events
        self.bound = bound


class ChannelUsageError(FedcohError):
    """Raised when a processor uses a channel endpoint of another node."""

    def __init__(self, message: str = "Processor is not on the channel endpoint node"):
        super().__init__(message)


class OwnershipError(FedcohError):
    """Raised when a non-owner transfers or touches owned data."""

    def __init__(self, message: str = "Ownership violation", owner: Optional[str] = None):
        super().__init__(message)
        self.owner = owner


class QueueUsageError(FedcohError):
    """Raised for invalid queue construction or role misuse."""

    def __init__(self, message: str = "Invalid queue usage"):
        super().__init__(message)


class LockUsageError(FedcohError):
    """Raised on lock misuse (unknown participant, release by non-holder)."""

    def __init__(self, message: str = "Invalid lock usage"):
        super().__init__(message)


class ItemFreedError(FedcohError):
    """Raised when reading an immutable item that has been freed."""

    def __init__(self, item: str):
        super().__init__(f"Immutable item {item} has been freed")
        self.item = item


class DoubleFreeError(FedcohError):
    """Raised when freeing an immutable item twice."""

    def __init__(self, item: str):
        super().__init__(f"Immutable item {item} freed twice")
        self.item = item


class VersionMismatchError(FedcohError):
    """Raised when a versioned read finds a different version than requested."""

    def __init__(self, expected: int, found: int):
        super().__init__(f"Version mismatch: expected {expected}, found {found}")
        self.expected = expected
        self.found = found


class UnknownLitmusCaseError(FedcohError):
    """Raised when a litmus case name is not in the catalog."""

    def __init__(self, name: str):
        super().__init__(f"Unknown litmus case: {name}")
        self.name = name


class BenchParameterError(FedcohError):
    """Raised for invalid overhead-model or simulator parameters."""

    def __init__(self, message: str = "Invalid benchmark parameters"):
        super().__init__(message)


class SchedulerDeadlockError(FedcohError):
    """Raised when every simulated thread is blocked."""

    def __init__(self, blocked: int, steps: int):
        super().__init__(f"{blocked} simulated threads blocked after {steps} steps")
        self.blocked = blocked
        self.steps = steps
