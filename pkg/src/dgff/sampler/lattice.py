"""Exact DGFF samplers on lattice domains.

Routes
------
dense
    ``h = L z`` with ``L L^T = G`` (Cholesky of the dense Green matrix).
spectral
    Full rectangles only: independent sine-mode coefficients with variance
    ``1/lambda`` synthesized by an orthonormal DST-I.
restrict
    Spectral sample on an enclosing rectangle, then the Gibbs-Markov split
    ``h^V = (h^V - phi) + phi`` keeps the part that is a DGFF on the target.

Sampling functions take either one :class:`RngStream` (returns a
:class:`Field`) or a sequence of streams (returns an array of shape
``(len(streams), |domain|)``, one replicate per row).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import idstn

from ..domain import LatticeDomain, boundary
from ..green.lattice import DomainError, GreenOperator, green_dense
from .rng import RngStream, stacked_normals

# harmonic solves: sparse LU below this many unknowns, Jacobi-CG above
DIRECT_LIMIT = 50_000
CG_RTOL = 1e-12

__all__ = [
    "Field",
    "GmDecomposition",
    "RestrictionOperator",
    "sample_dense",
    "sample_spectral_rect",
    "spectral_eigenvalues",
    "harmonic_extension",
    "sample_restrict",
    "sample_field",
]


@dataclass(eq=False)
class Field:
    """One real value per vertex of ``domain`` (vertex order)."""

    domain: LatticeDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.domain.size,):
            raise ValueError(f"field has {self.values.shape} values for {self.domain.size} vertices")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def N(self) -> int:
        return self.domain.N

    def grid(self, fill=np.nan) -> np.ndarray:
        return self.domain.to_grid(self.values, fill=fill)

    def __add__(self, c: float) -> "Field":
        return Field(self.domain, self.values + c)


def _wrap(L: LatticeDomain, values: np.ndarray, batched: bool):
    return values if batched else Field(L, values)


def sample_dense(G: GreenOperator, rng: RngStream | Sequence[RngStream], noise: np.ndarray | None = None):
    """Exact sample ``L z``; ``noise`` replaces the drawn normals when given."""
    n = G.domain.size
    if noise is None:
        z, batched = stacked_normals(rng, n)
    else:
        z = np.asarray(noise, dtype=float)
        batched = z.ndim == 2
    try:
        Lc = G.cholesky
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError("Green matrix is not numerically positive definite") from err
    return _wrap(G.domain, z @ Lc.T, batched)


def spectral_eigenvalues(width: int, height: int) -> np.ndarray:
    """Eigenvalues of I - P on the full w x h block, shape (w, h)."""
    cj = np.cos(np.pi * np.arange(1, width + 1) / (width + 1))
    ck = np.cos(np.pi * np.arange(1, height + 1) / (height + 1))
    return 1.0 - 0.5 * (cj[:, None] + ck[None, :])


def sample_spectral_rect(width: int, height: int, rng, origin=(0, 0), N: int = 1, parent=None, domain: LatticeDomain | None = None):
    """Exact DGFF on the block {x0..x0+w-1} x {y0..y0+h-1} via the sine basis."""
    if width < 1 or height < 1:
        raise ValueError("rectangle sides must be at least 1")
    L = domain if domain is not None else LatticeDomain.rectangle(width, height, origin, N, parent)
    scale = 1.0 / np.sqrt(spectral_eigenvalues(width, height))
    z, batched = stacked_normals(rng, width * height)
    c = z.reshape(z.shape[:-1] + (width, height)) * scale
    h = idstn(c, type=1, norm="ortho", axes=(-2, -1))
    # C-order flattening of [i, j] is lexicographic in (x, y)
    return _wrap(L, h.reshape(z.shape), batched)


class RestrictionOperator:
    """Gibbs-Markov split of fields on ``V`` relative to ``U`` (subset of V).

    ``binding`` is the harmonic extension into ``U`` of the values on
    ``V - U`` (zero outside ``V``); ``sub = parent - binding`` on ``U``.
    """

    def __init__(self, V: LatticeDomain, U: LatticeDomain):
        if not U.issubset(V):
            raise DomainError("U is not a subset of V")
        self.V, self.U = V, U
        self.u_idx = V.index_of(U.vertices)
        self.bd = boundary(U)
        self.bd_in_V = V.index_of(self.bd)

    @cached_property
    def _coupling(self):
        # (P_{U, dU})_{ij} = 1/4 when boundary site j neighbours vertex i
        U, bd = self.U, self.bd
        rows, cols = [], []
        for e in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            i = U.index_of(bd + np.array(e))
            ok = i >= 0
            rows.append(i[ok])
            cols.append(np.nonzero(ok)[0])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        return sp.csr_matrix((np.full(len(rows), 0.25), (rows, cols)), shape=(U.size, len(bd)))

    @cached_property
    def _lu(self):
        return spla.splu(self.U.laplacian, permc_spec="MMD_AT_PLUS_A")

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        # rhs has one column per field
        if self.U.size < DIRECT_LIMIT:
            return self._lu.solve(np.asfortranarray(rhs))
        A = self.U.laplacian.tocsr()
        M = sp.diags(1.0 / A.diagonal())
        out = np.empty_like(rhs)
        for k in range(rhs.shape[1]):
            b = rhs[:, k]
            if not np.any(b):
                out[:, k] = 0.0
                continue
            u, info = spla.cg(A, b, rtol=CG_RTOL, atol=0.0, M=M, maxiter=20 * self.U.size)
            if info != 0:
                raise RuntimeError(f"conjugate gradients did not converge (info={info})")
            out[:, k] = u
        return out

    def boundary_values(self, parent_values: np.ndarray) -> np.ndarray:
        pv = np.atleast_2d(parent_values)
        out = np.zeros((pv.shape[0], len(self.bd)))
        ok = self.bd_in_V >= 0
        out[:, ok] = pv[:, self.bd_in_V[ok]]
        return out if np.ndim(parent_values) == 2 else out[0]

    def extend(self, bvals: np.ndarray) -> np.ndarray:
        b = np.atleast_2d(bvals)
        rhs = self._coupling @ b.T
        phi = self._solve(np.asarray(rhs, dtype=float)).T
        return phi if np.ndim(bvals) == 2 else phi[0]

    def split(self, parent_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(sub, binding) restricted to U for one field or a batch."""
        binding = self.extend(self.boundary_values(parent_values))
        return parent_values[..., self.u_idx] - binding, binding


def harmonic_extension(U: LatticeDomain, boundary_values) -> Field:
    """Discrete harmonic function on ``U`` with the given outer-boundary data.

    ``boundary_values`` is either an array aligned with ``boundary(U)`` or a
    mapping from boundary vertex (tuple) to value; every boundary vertex must
    be covered.
    """
    bd = boundary(U)
    if isinstance(boundary_values, dict):
        missing = [tuple(int(c) for c in z) for z in bd if tuple(int(c) for c in z) not in boundary_values]
        if missing:
            raise ValueError(f"missing boundary data at {len(missing)} sites, e.g. {missing[0]}")
        b = np.array([boundary_values[tuple(int(c) for c in z)] for z in bd], dtype=float)
    else:
        b = np.asarray(boundary_values, dtype=float)
        if b.shape != (len(bd),):
            raise ValueError(f"expected {len(bd)} boundary values, got shape {b.shape}")
    op = RestrictionOperator(U, U)
    return Field(U, op.extend(b))


@dataclass(eq=False)
class GmDecomposition:
    """parent (on V) = sub + binding on U, binding harmonic on U."""

    sub: Field
    binding: Field
    parent: Field


def sample_restrict(parent: Field, U: LatticeDomain, op: RestrictionOperator | None = None) -> GmDecomposition:
    op = op or RestrictionOperator(parent.domain, U)
    sub, binding = op.split(parent.values)
    return GmDecomposition(Field(U, sub), Field(U, binding), parent)


def enclosing_rectangle(L: LatticeDomain, margin: int = 0) -> LatticeDomain:
    x0, y0, x1, y1 = L.bbox
    return LatticeDomain.rectangle(x1 - x0 + 1 + 2 * margin, y1 - y0 + 1 + 2 * margin, (x0 - margin, y0 - margin), L.N)


def sample_field(L: LatticeDomain, rng, route: str = "auto", G: GreenOperator | None = None, margin: int = 0):
    """Exact DGFF on ``L`` by the requested route.

    ``auto`` is spectral for full rectangles and restriction otherwise.
    """
    if L.size == 0:
        raise DomainError("cannot sample on an empty domain")
    if route == "auto":
        route = "spectral" if L.is_rectangle else "restrict"
    if route == "dense":
        return sample_dense(G if G is not None else green_dense(L), rng)
    if route == "spectral":
        if not L.is_rectangle:
            raise DomainError("spectral route needs a full rectangle")
        x0, y0, _, _ = L.bbox
        w, h = L.shape
        return sample_spectral_rect(w, h, rng, (x0, y0), domain=L)
    if route == "restrict":
        V = enclosing_rectangle(L, margin)
        vx0, vy0, _, _ = V.bbox
        w, h = V.shape
        parent = sample_spectral_rect(w, h, rng, (vx0, vy0), domain=V)
        op = RestrictionOperator(V, L)
        vals = parent if isinstance(parent, np.ndarray) else parent.values
        sub, _ = op.split(vals)
        return sub if isinstance(parent, np.ndarray) else Field(L, sub)
    raise ValueError(f"unknown sampler route {route!r}")
