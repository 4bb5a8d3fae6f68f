"""Unsupervised induction of formal/informal edge labels in interaction networks."""

__version__ = "0.1.0"
