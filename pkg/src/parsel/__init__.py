"""Parallel ranking and selection over stochastic simulation models."""

__version__ = "0.1.0"
