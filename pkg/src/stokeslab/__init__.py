"""Desk-scale laboratory for irregular singular systems ``x^(p+1) y' = A(x, y)``."""

__version__ = "0.1.0"
