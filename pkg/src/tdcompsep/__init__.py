"""Recycling Krylov solvers for sequences of time-domain component-separation systems."""

__version__ = "0.1.0"
