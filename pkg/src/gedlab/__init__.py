"""Constrained contextual decision-making with generalized-eluder UCB exploration."""

__version__ = "0.1.0"
