"""Exact lattice DGFF samplers and the truncated continuum field h_t."""
from .continuum import HtBasis, HtSample, QuadratureGrid, TruncationError, build_Zt, sample_ht, sample_ht_disc, sample_ht_rect, zt_cell_masses
from .lattice import (
    Field,
    GmDecomposition,
    RestrictionOperator,
    enclosing_rectangle,
    harmonic_extension,
    sample_dense,
    sample_field,
    sample_restrict,
    sample_spectral_rect,
    spectral_eigenvalues,
)
from .rng import RESERVED_STREAM_BASE, RngStream, streams
