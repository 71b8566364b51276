"""Entanglement and separability certificates from conditional-gradient runs."""

__version__ = "0.1.0"
