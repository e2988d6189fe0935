"""Fault diagnosis and insight harvesting for steel plates."""

__version__ = "0.1.0"
