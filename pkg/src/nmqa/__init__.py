"""Adaptive noise mapping over qubit arrays with a two-layer particle filter."""

__version__ = "0.1.0"
