"""Discrete Gaussian free field in two dimensions.

Exact samplers, lattice potential theory, near-extremal and extremal point
processes, and finite-N checks of their limit laws.
"""
from .domain import (
    ContinuumDomain,
    DeltaInterior,
    Disc,
    LatticeDomain,
    RectUnion,
    Rectangle,
    boundary,
    delta_interior,
    discretize,
    linf_ball,
    unit_disc,
    unit_square,
)
from .extremes import NormingSpec, c_of_phi, extract_structured, lattice_clqg, m_of, phi_normed_measure, zeta_measure
from .green import ALPHA, C0, C_STAR, G_CONST, conformal_radius, continuum_green, green_dense, potential_kernel
from .measure import PointMeasure
from .sampler import Field, RngStream, build_Zt, sample_field, sample_ht, sample_restrict

__version__ = "0.1.0"
