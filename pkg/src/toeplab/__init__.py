"""Truncated Toeplitz and Laurent operators, conjugate-operator commutators and Mourre certificates."""

from . import symbolkit, opforge, perturb, spectra, dynamo

__version__ = "0.1.0"

__all__ = ["symbolkit", "opforge", "perturb", "spectra", "dynamo", "__version__"]
