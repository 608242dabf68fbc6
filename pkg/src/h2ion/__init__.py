"""Finite-dimensional QED model of hydrogen-molecule ionization."""

__version__ = "0.1.0"
