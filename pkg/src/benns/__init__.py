"""Surrogate-assisted SFC embedding: demand math, latency approximator and hybrid evolution."""

__version__ = "0.1.0"
