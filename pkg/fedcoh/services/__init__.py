"""
Services package

Topology, the memory simulator, coherence checkers, synchronization
library, litmus catalog and overhead benchmarks.
"""
