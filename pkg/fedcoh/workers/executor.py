"""
Executor for running simulated processors on real OS threads.

Each procedure drives one simulated processor (or a disjoint set of them)
against a shared memory system; memcore serializes per-location
transitions, so the recorded trace is a valid interleaving of whatever the
OS scheduler produced.
"""
import logging
import traceback
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from time import time
from typing import Any, Callable, Iterable, List, Optional, Sequence, TypeVar

from fedcoh.config.settings import get_settings
from fedcoh.services.scheduler import SimThread, drive
from fedcoh.utils.logging import get_logger, log_with_context

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class ExecutorReport:
    """Outcome of one concurrent run."""
    results: List[Any] = field(default_factory=list)
    errors: List[BaseException] = field(default_factory=list)
    duration: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.errors


class ConcurrentExecutor:
    """
    Thread pool for simulated procedures and independent runs.

    Args:
        max_workers: Pool size; defaults to one thread per procedure
        poll: Sleep between predicate checks of blocked procedures
    """

    def __init__(self, max_workers: Optional[int] = None, poll: Optional[float] = None):
        self.max_workers = max_workers
        self.poll = get_settings().EXECUTOR_POLL_SECONDS if poll is None else poll

    def run_threads(self, threads: Sequence[SimThread], timeout: Optional[float] = None) -> ExecutorReport:
        """
        Drive every procedure on its own OS thread until all finish.

        A procedure that blocks waits for others to make progress, so the
        pool needs at least one worker per procedure.
        """
        workers = max(len(threads), self.max_workers or 0, 1)
        start = time()
        report = ExecutorReport()
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="fedcoh-proc") as pool:
            futures: List[Future] = [pool.submit(drive, t, self.poll) for t in threads]
            for future in futures:
                self._collect(future, report, timeout)
        report.duration = time() - start
        log_with_context(logger, logging.INFO, "Concurrent run finished", threads=len(threads),
                         errors=len(report.errors), duration=round(report.duration, 4))
        return report

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Apply fn to independent items in parallel, preserving order."""
        with ThreadPoolExecutor(max_workers=self.max_workers, thread_name_prefix="fedcoh-run") as pool:
            return list(pool.map(fn, items))

    @staticmethod
    def _collect(future: Future, report: ExecutorReport, timeout: Optional[float]) -> None:
        try:
            report.results.append(future.result(timeout=timeout))
        except Exception as e:
            report.results.append(None)
            report.errors.append(e)
            log_with_context(logger, logging.ERROR, f"Simulated thread failed: {e}",
                             error_type=type(e).__name__, traceback=traceback.format_exc())
