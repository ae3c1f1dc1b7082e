"""Looped transformers with adaptive depth for length generalization."""

__version__ = "0.1.0"
