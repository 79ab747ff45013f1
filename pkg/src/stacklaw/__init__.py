"""Exact simulator and verification harness for prescribed Birkhoff-sum laws
over cutting-and-stacking systems."""

__version__ = "0.1.0"
