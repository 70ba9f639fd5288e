"""Truncated continuum GFF h_t and the measures Z_t built from it.

h_t(x) = sum_k exp(-exp(-t) lambda_k / 2) f_k(x) c_k,  c_k ~ N(0, 1/lambda_k),

with (f_k, lambda_k) the Dirichlet eigenpairs of -Delta/4.  Rectangles use
products of sines; discs use Bessel modes J_n(j_{n,m} rho / R) cos/sin(n theta).
Fields are evaluated on a quadrature grid (cell midpoints with cell areas).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import exp1, jn_zeros, jv

from ..domain import ContinuumDomain, Disc, Rectangle
from ..green.constants import ALPHA
from ..green.continuum import log_conformal_radius
from ..measure import PointMeasure
from .rng import stacked_normals

MAX_MODES = 200_000


class TruncationError(ValueError):
    """Requested tolerance needs more modes than allowed."""


@dataclass(eq=False)
class QuadratureGrid:
    domain: ContinuumDomain
    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


def rect_grid(D: Rectangle, nx: int, ny: int | None = None) -> QuadratureGrid:
    ny = ny or nx
    xs = D.x0 + (np.arange(nx) + 0.5) * D.width / nx
    ys = D.y0 + (np.arange(ny) + 0.5) * D.height / ny
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    w = np.full(nx * ny, D.area / (nx * ny))
    return QuadratureGrid(D, np.column_stack([X.ravel(), Y.ravel()]), w)


def disc_grid(D: Disc, nrho: int, ntheta: int | None = None) -> QuadratureGrid:
    """Polar midpoint grid; ring edges sit at multiples of R/nrho."""
    ntheta = ntheta or nrho
    dr = D.radius / nrho
    dth = 2 * np.pi / ntheta
    rho = (np.arange(nrho) + 0.5) * dr
    th = (np.arange(ntheta) + 0.5) * dth
    P, T = np.meshgrid(rho, th, indexing="ij")
    pts = np.column_stack([D.cx + P.ravel() * np.cos(T.ravel()), D.cy + P.ravel() * np.sin(T.ravel())])
    return QuadratureGrid(D, pts, (P * dr * dth).ravel())


def make_grid(D: ContinuumDomain, resolution) -> QuadratureGrid:
    if isinstance(resolution, QuadratureGrid):
        return resolution
    res = (resolution, resolution) if np.isscalar(resolution) else tuple(resolution)
    if isinstance(D, Rectangle):
        return rect_grid(D, *res)
    if isinstance(D, Disc):
        return disc_grid(D, *res)
    raise ValueError("h_t is only available on rectangles and discs")


def lambda_cutoff(t: float, tol: float, area: float) -> float:
    """Eigenvalue cutoff so that the dropped variance is below ``tol``.

    Weyl's law for -Delta/4 gives sum_{lambda_k <= L} f_k(x)^2 ~ L/pi, so the
    tail beyond L is about E1(exp(-t) L) / pi; a factor 10 covers the Weyl
    remainder and boundary effects.
    """
    s = np.exp(-t)
    f = lambda L: 10.0 * exp1(s * L) / np.pi - tol
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi * area / np.pi > 10 * MAX_MODES:
            raise TruncationError(f"t={t} needs more than {MAX_MODES} modes for tolerance {tol}")
    return brentq(f, 1e-12, hi)


def rect_modes(D: Rectangle, lam_max: float):
    a, b = D.width, D.height
    jmax = int(np.floor(2 * a * np.sqrt(lam_max) / np.pi)) + 1
    kmax = int(np.floor(2 * b * np.sqrt(lam_max) / np.pi)) + 1
    j, k = np.meshgrid(np.arange(1, jmax + 1), np.arange(1, kmax + 1), indexing="ij")
    lam = 0.25 * np.pi**2 * (j**2 / a**2 + k**2 / b**2)
    keep = lam <= lam_max
    return j[keep], k[keep], lam[keep]


def rect_eval(D: Rectangle, modes, points) -> np.ndarray:
    j, k, _ = modes
    x = (points[:, 0] - D.x0) / D.width
    y = (points[:, 1] - D.y0) / D.height
    c = 2.0 / np.sqrt(D.area)
    return c * np.sin(np.pi * np.outer(x, j)) * np.sin(np.pi * np.outer(y, k))


def disc_modes(D: Disc, lam_max: float):
    zmax = 2 * D.radius * np.sqrt(lam_max)
    out = []
    n = 0
    while True:
        zeros = jn_zeros(n, max(4, int(zmax / np.pi) + 4))
        zeros = zeros[zeros <= zmax]
        if len(zeros) == 0:
            break
        for z in zeros:
            out.append((n, z, 0))
            if n > 0:
                out.append((n, z, 1))
        n += 1
    if not out:
        return np.zeros(0, int), np.zeros(0), np.zeros(0, int), np.zeros(0)
    n, z, parity = (np.array(v) for v in zip(*out))
    return n, z, parity, z**2 / (4 * D.radius**2)


def disc_eval(D: Disc, modes, points) -> np.ndarray:
    n, z, parity, _ = modes
    R = D.radius
    dx = points[:, 0] - D.cx
    dy = points[:, 1] - D.cy
    rho = np.hypot(dx, dy) / R
    th = np.arctan2(dy, dx)
    radial = jv(n[None, :], np.outer(rho, z))
    norm = np.where(n == 0, 1.0 / (np.sqrt(np.pi) * R), np.sqrt(2.0 / np.pi) / R) / np.abs(jv(n + 1, z))
    ang = np.where(parity[None, :] == 0, np.cos(np.outer(th, n)), np.sin(np.outer(th, n)))
    return radial * ang * norm


@dataclass(eq=False)
class HtSample:
    """h_t on a quadrature grid; ``values`` is (m,) or (reps, m)."""

    domain: ContinuumDomain
    t: float
    grid: QuadratureGrid
    values: np.ndarray
    variance: np.ndarray


class HtBasis:
    """Truncated eigenbasis of -Delta/4 evaluated on a grid, reusable across draws."""

    def __init__(self, D: ContinuumDomain, resolution, t: float, tol: float = 1e-8, lam_max: float | None = None):
        if t < 0:
            raise ValueError("t must be non-negative")
        self.domain = D
        self.t = float(t)
        self.grid = make_grid(D, resolution)
        area = D.area
        self.lam_max = lam_max if lam_max is not None else lambda_cutoff(t, tol, area)
        if isinstance(D, Rectangle):
            modes = rect_modes(D, self.lam_max)
            self.lam = modes[2]
            evaluate = rect_eval
        else:
            modes = disc_modes(D, self.lam_max)
            self.lam = modes[3]
            evaluate = disc_eval
        if len(self.lam) > MAX_MODES:
            raise TruncationError(f"{len(self.lam)} modes exceed the cap {MAX_MODES}")
        self.modes = modes
        self.F = evaluate(D, modes, self.grid.points)
        damp = np.exp(-0.5 * np.exp(-self.t) * self.lam)
        self.scale = damp / np.sqrt(self.lam)
        self.variance = (self.F**2) @ (self.scale**2)

    def sample(self, rng) -> HtSample:
        z, batched = stacked_normals(rng, len(self.lam))
        vals = (z * self.scale) @ self.F.T
        return HtSample(self.domain, self.t, self.grid, vals, self.variance)


def sample_ht(D: ContinuumDomain, resolution, t: float, rng, tol: float = 1e-8) -> HtSample:
    return HtBasis(D, resolution, t, tol).sample(rng)


def sample_ht_rect(D: Rectangle, resolution, t: float, rng, tol: float = 1e-8) -> HtSample:
    if not isinstance(D, Rectangle):
        raise TypeError("sample_ht_rect needs a Rectangle")
    return sample_ht(D, resolution, t, rng, tol)


def sample_ht_disc(D: Disc, resolution, t: float, rng, tol: float = 1e-8) -> HtSample:
    if not isinstance(D, Disc):
        raise TypeError("sample_ht_disc needs a Disc")
    return sample_ht(D, resolution, t, rng, tol)


def zt_cell_masses(ht: HtSample, log_r2: np.ndarray | None = None) -> np.ndarray:
    """alpha sqrt(t) exp(alpha h_t - alpha^2 Var / 2) r^2 * cell area, per cell."""
    if not ht.t > 0:
        raise ValueError("Z_t needs t > 0")
    if log_r2 is None:
        log_r2 = 2.0 * log_conformal_radius(ht.domain, ht.grid.points)
    expo = ALPHA * ht.values - 0.5 * ALPHA**2 * ht.variance + log_r2
    return ALPHA * np.sqrt(ht.t) * np.exp(expo) * ht.grid.weights


def build_Zt(ht: HtSample, log_r2: np.ndarray | None = None):
    """Z_t as a spatial PointMeasure (one field) or cell-mass array (batch)."""
    m = zt_cell_masses(ht, log_r2)
    if m.ndim == 2:
        return m
    return PointMeasure(ht.grid.points, m, None, None, ht.domain)
