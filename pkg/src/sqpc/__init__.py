"""Simulator and analysis tools for Bell-state semiquantum private comparison."""

__version__ = "0.1.0"
