"""Swarm Learning over a simulated consortium blockchain."""

__version__ = "0.1.0"
