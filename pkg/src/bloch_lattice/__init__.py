"""Hyperbolic volumes, integer relations and best-fit volume lattices.

Modules: ``numerics`` (precision, roots, the Bloch-Wigner function),
``triangulation`` (gluing equations, Ptolemy coordinates, volumes),
``relations`` (integer relations, exact rationals), ``lattice`` (best-fit
lattices per field), ``census`` (CSV ingestion and field statistics) and
``cli``.
"""

from .numerics import INF, IntPolynomial, PrecisionContext, count_complex_places, dilog_D, roots
from .relations import lindep
from .lattice import SampleKind, VolumeSample, fit_field

__version__ = "0.1.0"

__all__ = [
    "INF",
    "IntPolynomial",
    "PrecisionContext",
    "SampleKind",
    "VolumeSample",
    "count_complex_places",
    "dilog_D",
    "fit_field",
    "lindep",
    "roots",
]
