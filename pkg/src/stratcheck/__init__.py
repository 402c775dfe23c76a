"""Numerical checks of Kuo-type jet sufficiency and stratification regularity."""

__version__ = "0.1.0"
