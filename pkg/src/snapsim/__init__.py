"""Deterministic simulation of snapshot-based FaaS cold-start mitigation."""

__version__ = "0.1.0"
