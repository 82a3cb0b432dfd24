"""
Cooperative scheduling of simulated threads.

Synchronization procedures are generators: a bare `yield` marks a point
where another simulated thread may run, and `yield predicate` blocks until
the predicate holds. The same procedure can be driven by the seeded
`Scheduler` (deterministic interleavings) or by real OS threads through
`drive` (see fedcoh.workers.executor).
"""
import logging
import random
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Generator, Iterable, List, Optional, TypeVar

from fedcoh.config.settings import get_settings
from fedcoh.exceptions import SchedulerDeadlockError
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)

T = TypeVar("T")
Condition = Optional[Callable[[], bool]]
SimThread = Generator[Condition, None, T]


def schedule() -> SimThread[None]:
    """Let other simulated threads run."""
    yield None


def wait_until(predicate: Callable[[], bool]) -> SimThread[None]:
    """Block until predicate() is true."""
    while not predicate():
        yield predicate


def run_sync(thread: SimThread[T]) -> T:
    """
    Run one procedure to completion on the calling thread.

    Raises:
        SchedulerDeadlockError: If the procedure blocks on a predicate that
            nothing else can make true
    """
    try:
        condition = next(thread)
        while True:
            if condition is not None and not condition():
                raise SchedulerDeadlockError(blocked=1, steps=0)
            condition = thread.send(None)
    except StopIteration as stop:
        return stop.value


def drive(thread: SimThread[T], poll: Optional[float] = None) -> T:
    """
    Run one procedure on a real OS thread, sleeping while it is blocked.

    Args:
        thread: Procedure to drive
        poll: Sleep between predicate checks (EXECUTOR_POLL_SECONDS)
    """
    poll = get_settings().EXECUTOR_POLL_SECONDS if poll is None else poll
    try:
        condition = next(thread)
        while True:
            if condition is None:
                time.sleep(0)
            else:
                while not condition():
                    time.sleep(poll)
            condition = thread.send(None)
    except StopIteration as stop:
        return stop.value


@dataclass
class RunResult:
    """Outcome of a scheduled run."""
    completed: bool
    steps: int
    results: List[Any] = field(default_factory=list)
    blocked: int = 0


class _Task:
    __slots__ = ("index", "thread", "condition", "done", "result", "started")

    def __init__(self, index: int, thread: SimThread):
        self.index = index
        self.thread = thread
        self.condition: Condition = None
        self.done = False
        self.result: Any = None
        self.started = False

    def runnable(self) -> bool:
        return not self.done and (self.condition is None or self.condition())

    def step(self) -> None:
        try:
            self.condition = self.thread.send(None) if self.started else next(self.thread)
        except StopIteration as stop:
            self.done = True
            self.result = stop.value
        self.started = True


class Scheduler:
    """
    Seeded random interleaving of simulated threads.

    At every step one runnable thread, chosen uniformly at random, runs
    until its next yield. Identical seeds and threads give identical
    interleavings.
    """

    def __init__(self, seed: int = 0, max_steps: Optional[int] = None):
        self.seed = seed
        self.max_steps = get_settings().SCHEDULER_MAX_STEPS if max_steps is None else max_steps
        self.rng = random.Random(seed)

    def run(self, threads: Iterable[SimThread], raise_on_deadlock: bool = False) -> RunResult:
        """
        Interleave threads until all finish, all block, or max_steps runs out.

        Args:
            threads: Started-or-fresh generator procedures
            raise_on_deadlock: Raise instead of returning completed=False

        Returns:
            RunResult with each thread's return value in input order

        Raises:
            SchedulerDeadlockError: When raise_on_deadlock and every live thread is blocked
        """
        tasks = [_Task(i, t) for i, t in enumerate(threads)]
        steps = 0
        while steps < self.max_steps:
            live = [t for t in tasks if not t.done]
            if not live:
                break
            ready = [t for t in live if t.runnable()]
            if not ready:
                log_with_context(
                    logger, logging.WARNING, "Scheduled threads deadlocked",
                    blocked=len(live), steps=steps, seed=self.seed,
                )
                if raise_on_deadlock:
                    raise SchedulerDeadlockError(blocked=len(live), steps=steps)
                return RunResult(False, steps, [t.result for t in tasks], blocked=len(live))
            self.rng.choice(ready).step()
            steps += 1

        pending = sum(1 for t in tasks if not t.done)
        return RunResult(pending == 0, steps, [t.result for t in tasks], blocked=pending)
