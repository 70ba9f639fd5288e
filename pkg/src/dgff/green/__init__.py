"""Lattice and continuum Green functions, harmonic measure, conformal radius."""
from .constants import ALPHA, C0, C_STAR, CONSTANTS, G_CONST, SQRT_G, Constants
from .continuum import conformal_radius, continuum_green, harmonic_measure_continuum, log_conformal_radius
from .kernel import exact_value, potential_kernel, potential_kernel_asymptotic
from .lattice import (
    DENSE_CAP,
    DomainError,
    GreenOperator,
    HarmonicMeasure,
    SizeError,
    green_asymptotics_residual,
    green_column,
    green_dense,
    green_diag,
    green_diag_rect,
    green_via_boundary,
    harmonic_measure_discrete,
)
