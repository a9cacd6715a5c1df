"""Numerical laboratory for resolvent and decay estimates of damped waves."""

from .damping import DampingProfile, eval_b, extend_W, homogeneity_bounds, omega_b
from .operators import OperatorSpec, adjoint_apply, apply, assemble, conjugation_residual, scale_T_alpha
from .spectral import Grid, SpectralField, make_grid, to_modal, to_nodal

__all__ = [
    "DampingProfile",
    "Grid",
    "OperatorSpec",
    "SpectralField",
    "adjoint_apply",
    "apply",
    "assemble",
    "conjugation_residual",
    "eval_b",
    "extend_W",
    "homogeneity_bounds",
    "make_grid",
    "omega_b",
    "scale_T_alpha",
    "to_modal",
    "to_nodal",
]
