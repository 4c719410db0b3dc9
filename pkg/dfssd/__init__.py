"""Shallow State Duality and Deep Fault obfuscation with a sequential SAT attack."""

__version__ = "1.0.0"
