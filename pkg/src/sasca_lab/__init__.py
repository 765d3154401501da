"""Desk-scale simulation lab for soft-analytical attacks on NTT hardware."""

__version__ = "0.1.0"
