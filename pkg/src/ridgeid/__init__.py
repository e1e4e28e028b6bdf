"""Identification of shallow ridge-function networks from point queries."""

__version__ = "0.1.0"
