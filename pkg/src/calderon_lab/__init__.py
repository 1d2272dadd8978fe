"""Numerical experiments around the Clifford-Beltrami form of the 3D
inverse conductivity problem: quaternion-valued field calculus, monogenic
exponentials, a finite-difference DtN forward model and linearised
Fourier reconstruction."""

from . import beltrami, clifford, fields, forward, gridio, linrecon, monogenic, spectral
from .errors import CalderonError

__version__ = "0.1.0"

__all__ = [
    "beltrami",
    "clifford",
    "fields",
    "forward",
    "gridio",
    "linrecon",
    "monogenic",
    "spectral",
    "CalderonError",
]
