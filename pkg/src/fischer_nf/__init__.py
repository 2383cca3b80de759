"""Exact partial normal forms via weighted apolar decompositions."""

__version__ = "0.1.0"
