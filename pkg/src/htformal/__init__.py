"""Formal side-channel vulnerability assessment of gate-level netlists."""

__version__ = "0.1.0"
