"""Distributed causal inference through shared dimensionality-reduced representations."""

__version__ = "0.1.0"
