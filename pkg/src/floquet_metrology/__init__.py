"""Quantum Fisher information under restricted and Floquet-engineered controls."""

__version__ = "0.1.0"
