"""
fedcoh: federated coherence for disaggregated memory.

Simulates node-shared caches over a global memory, checks execution traces
against full, weak and federated coherence, and provides synchronization
paradigms and an overhead model on top of the simulated memory.
"""

__version__ = "0.1.0"
