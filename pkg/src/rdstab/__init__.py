"""Simulator and stability-bound calculator for Redundancy-d load balancing with FIFO servers."""
__version__ = "0.1.0"
