"""Direct and inverse spectral solvers for a weighted Dirac system."""

__version__ = "0.1.0"
