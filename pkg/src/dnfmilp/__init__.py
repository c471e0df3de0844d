"""Interpretable DNF rule learning from binary data via mixed-binary programming."""

__version__ = "0.1.0"
