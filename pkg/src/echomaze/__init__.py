"""Deterministic desk-scale maze robotics simulator and teaching service."""

__version__ = "0.1.0"
