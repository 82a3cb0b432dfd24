"""
Workers package

Runs simulated processors on OS threads.
"""

from fedcoh.workers.executor import ConcurrentExecutor, ExecutorReport

__all__ = ["ConcurrentExecutor", "ExecutorReport"]
