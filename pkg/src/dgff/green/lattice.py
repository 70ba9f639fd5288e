"""Green functions of simple random walk killed on leaving a lattice domain.

``G^L(x, y)`` is the expected number of visits to ``y`` of the walk started
at ``x`` before it leaves ``L``; equivalently ``G = (I - P)^{-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..domain import LatticeDomain, boundary, delta_interior
from .constants import C0, G_CONST
from .kernel import potential_kernel

DENSE_CAP = 20_000


class DomainError(ValueError):
    """A point or vertex lies outside the domain an operation requires."""


class SizeError(ValueError):
    """Domain too large for the dense path."""


@dataclass(eq=False)
class GreenOperator:
    """Dense Green matrix of a lattice domain (rows/cols in vertex order)."""

    domain: LatticeDomain
    matrix: np.ndarray
    diag: np.ndarray = field(init=False)

    def __post_init__(self):
        self.matrix.setflags(write=False)
        self.diag = np.diag(self.matrix).copy()

    @cached_property
    def cholesky(self) -> np.ndarray:
        """Lower factor L with L L^T = G."""
        return np.linalg.cholesky(self.matrix)

    def __call__(self, x, y) -> float:
        i, j = self.domain.index_of([x, y])
        if i < 0 or j < 0:
            raise DomainError("vertex not in domain")
        return float(self.matrix[i, j])

    def residual(self) -> float:
        """max |(I - P) G - I| over all entries."""
        R = self.domain.laplacian @ self.matrix
        R[np.diag_indices_from(R)] -= 1.0
        return float(np.abs(R).max()) if R.size else 0.0


def green_dense(L: LatticeDomain, cap: int = DENSE_CAP) -> GreenOperator:
    n = L.size
    if n > cap:
        raise SizeError(f"{n} vertices exceeds dense cap {cap}; use green_column for single columns")
    if n == 0:
        raise DomainError("empty lattice domain")
    Q = L.laplacian.toarray()
    c = sla.cho_factor(Q, lower=True)
    G = sla.cho_solve(c, np.eye(n))
    G = 0.5 * (G + G.T)
    return GreenOperator(L, G)


def _factor(L: LatticeDomain):
    return spla.splu(L.laplacian, permc_spec="MMD_AT_PLUS_A")


def green_column(L: LatticeDomain, x, method: str = "direct", rtol: float = 1e-12) -> np.ndarray:
    """G^L(x, .) as a vector in vertex order, by one sparse solve.

    ``method="cg"`` runs Jacobi-preconditioned conjugate gradients instead
    of a sparse LU; intended for domains too large to factor.
    """
    i = int(L.index_of(x)[0])
    if i < 0:
        raise DomainError(f"{tuple(x)} is not a vertex of the domain")
    b = np.zeros(L.size)
    b[i] = 1.0
    if method == "direct":
        return _factor(L).solve(b)
    if method == "cg":
        A = L.laplacian.tocsr()
        M = sp.diags(1.0 / A.diagonal())
        u, info = spla.cg(A, b, rtol=rtol, atol=0.0, M=M, maxiter=50 * L.size)
        if info != 0:
            raise RuntimeError(f"conjugate gradients did not converge (info={info})")
        return u
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class HarmonicMeasure:
    """Exit distribution: ``weights[k]`` is the mass at ``nodes[k]``."""

    source: tuple
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def _exit_weights(L: LatticeDomain, column: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Last-exit decomposition: H(x, z) = sum_{y in L, y ~ z} G(x, y) / 4.
    bd = boundary(L)
    w = np.zeros(len(bd))
    for e in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        j = L.index_of(bd + np.array(e))
        ok = j >= 0
        w[ok] += 0.25 * column[j[ok]]
    return bd, w


def harmonic_measure_discrete(L: LatticeDomain, x, method: str = "direct") -> HarmonicMeasure:
    """Exit distribution of simple random walk from ``x`` on the outer boundary of ``L``."""
    col = green_column(L, x, method=method)
    bd, w = _exit_weights(L, col)
    return HarmonicMeasure(tuple(int(c) for c in x), bd, w)


def green_via_boundary(L: LatticeDomain, x, method: str = "direct") -> float:
    """G^L(x, x) = sum_z H^L(x, z) a(x - z) over the outer boundary."""
    H = harmonic_measure_discrete(L, x, method=method)
    a = potential_kernel(np.asarray(x, dtype=np.int64) - H.nodes)
    return float(np.dot(H.weights, a))


def green_diag(L: LatticeDomain, x, method: str = "direct") -> float:
    """G^L(x, x) from one sparse column solve."""
    i = int(L.index_of(x)[0])
    return float(green_column(L, x, method=method)[i])


def _sine_modes(n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(1, n + 1)
    S = np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(k, k) / (n + 1))
    return S, np.cos(np.pi * k / (n + 1))


def green_diag_rect(width: int, height: int) -> np.ndarray:
    """Diagonal of the Green function of a full w x h block, shape (w, h).

    Uses the separable sine eigenbasis of I - P:
    G(x, x) = sum_{j,k} s_j(x1)^2 s_k(x2)^2 / (1 - (cos_j + cos_k)/2).
    """
    Sx, cx = _sine_modes(width)
    Sy, cy = _sine_modes(height)
    inv_lam = 1.0 / (1.0 - 0.5 * (cx[:, None] + cy[None, :]))
    return (Sx**2) @ inv_lam @ (Sy**2).T


def green_asymptotics_residual(
    L: LatticeDomain,
    x,
    delta: float = 0.1,
    method: str = "boundary",
    c0: float = C0,
    r: float | None = None,
) -> float:
    """G^{D_N}(floor(xN), floor(xN)) - g log N - c0 - g log r^D(x).

    ``method`` selects how the diagonal Green value is obtained:
    ``"boundary"`` (harmonic measure against the potential kernel) or
    ``"direct"`` (sparse column solve).  ``c0`` can be overridden to inject a
    wrong constant; ``r`` short-circuits the conformal-radius evaluation.
    """
    from .continuum import conformal_radius

    D = L.parent
    if D is None:
        raise DomainError("lattice domain carries no continuum parent")
    if L.N < 4:
        raise DomainError("residual needs N >= 4")
    x = np.asarray(x, dtype=float)
    if not delta_interior(D, delta)(x)[0]:
        raise DomainError(f"{tuple(x)} is not in the {delta}-interior of the domain")
    v = np.floor(x * L.N).astype(np.int64)
    if method == "boundary":
        Gxx = green_via_boundary(L, v)
    elif method == "direct":
        Gxx = green_diag(L, v)
    else:
        raise ValueError(f"unknown method {method!r}")
    if r is None:
        r = conformal_radius(D, x)
    return Gxx - G_CONST * np.log(L.N) - c0 - G_CONST * np.log(r)
