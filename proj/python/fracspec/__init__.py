"""Spectral fractional Laplacian solver built on spectrum slicing."""

from ._core import (
    Basis,
    FracspecError,
    Problem,
    apply_fractional,
    count_geq,
    count_geq_kpm,
    eigensolve,
    expand,
    load_basis,
    solve_diffusion,
    solve_poisson,
)

__all__ = [
    "Basis",
    "FracspecError",
    "Problem",
    "apply_fractional",
    "count_geq",
    "count_geq_kpm",
    "eigensolve",
    "expand",
    "load_basis",
    "solve_diffusion",
    "solve_poisson",
]
