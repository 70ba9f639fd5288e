"""Continuum potential theory: harmonic measure, conformal radius, Green function.

Three evaluation routes, chosen per shape:

* disc: closed forms (and Poisson-kernel quadrature for the harmonic measure);
* rectangle: method of images summed into Jacobi theta functions;
* anything else (and on request for rectangles): a Shortley-Weller
  finite-difference Dirichlet solve on a grid anchored at the source point,
  whose adjoint solution gives the harmonic measure as weights on the points
  where grid lines cross the boundary.

All Green functions are normalized as the kernel of (-Delta/4)^{-1}, i.e.
``G(x, y) = -g log|x - y| + O(1)``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..domain import ContinuumDomain, Disc, Rectangle
from .constants import G_CONST
from .lattice import DomainError, HarmonicMeasure

GRID_RESOLUTION = 256


# ---------------------------------------------------------------------------
# Jacobi theta function for rectangles


def _logabs_theta1(u: np.ndarray, T: float, nterms: int = 40) -> np.ndarray:
    """log|theta_1(u | q)| with nome q = exp(-T), T > 0.

    The imaginary part of ``u`` is first reduced into [-T/2, T/2] with the
    quasi-period relation |theta_1(u + i T)| = e^{T + 2 Im u} |theta_1(u)|.
    """
    u = np.asarray(u, dtype=complex)
    v = u.imag
    m = np.round(v / T)
    v_red = v - m * T
    # log|theta(v)| = log|theta(v - mT)| + sum_{k=0}^{m-1} (T + 2 (v_red + kT))
    # which collapses to m*T + 2*m*v_red + m*(m-1)*T for either sign of m.
    shift = m * T + 2 * m * v_red + m * (m - 1) * T
    ur = np.mod(u.real, np.pi) + 1j * v_red
    n = np.arange(nterms)
    coef = ((-1.0) ** n) * np.exp(-T * (n + 0.5) ** 2)
    s = np.tensordot(np.sin(np.multiply.outer(ur, 2 * n + 1)), coef, axes=([-1], [0]))
    return np.log(np.abs(2 * s)) + shift


def _theta1_prime0(T: float, nterms: int = 40) -> float:
    n = np.arange(nterms)
    return float(2 * np.sum(((-1.0) ** n) * np.exp(-T * (n + 0.5) ** 2) * (2 * n + 1)))


def _rect_frame(D: Rectangle, points) -> tuple[np.ndarray, float, float]:
    """Complex coordinates in a frame (0, a) x (0, b) with a <= b."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    x = p[:, 0] - D.x0
    y = p[:, 1] - D.y0
    a, b = D.width, D.height
    if a > b:
        x, y, a, b = y, x, b, a
    return x + 1j * y, a, b


def _rect_log_conformal_radius(D: Rectangle, points) -> np.ndarray:
    w, a, b = _rect_frame(D, points)
    T = np.pi * b / a
    k = np.pi / a
    return (
        np.log(2 * a / np.pi)
        - np.log(_theta1_prime0(T))
        + _logabs_theta1(1j * k * w.imag, T)
        + _logabs_theta1(k * w.real + 0j, T)
        - _logabs_theta1(k * w, T)
    )


def _rect_green(D: Rectangle, x, y) -> np.ndarray:
    z, a, b = _rect_frame(D, x)
    w, _, _ = _rect_frame(D, y)
    T = np.pi * b / a
    k = np.pi / (2 * a)
    num = _logabs_theta1(k * (z - w), T) + _logabs_theta1(k * (z + w), T)
    den = _logabs_theta1(k * (z - np.conj(w)), T) + _logabs_theta1(k * (z + np.conj(w)), T)
    return -G_CONST * (num - den)


# ---------------------------------------------------------------------------
# Shortley-Weller grid harmonic measure


def _grid_harmonic_measure(D: ContinuumDomain, x: np.ndarray, resolution: int) -> HarmonicMeasure:
    x0, y0, x1, y1 = D.bbox
    h = max(x1 - x0, y1 - y0) / resolution
    i = np.arange(int(np.floor((x0 - x[0]) / h)), int(np.ceil((x1 - x[0]) / h)) + 1)
    j = np.arange(int(np.floor((y0 - x[1]) / h)), int(np.ceil((y1 - x[1]) / h)) + 1)
    I, J = np.meshgrid(i, j, indexing="ij")
    pts = np.column_stack([x[0] + h * I.ravel(), x[1] + h * J.ravel()])
    inside = D.contains(pts)
    p = pts[inside]
    gi = np.column_stack([I.ravel()[inside], J.ravel()[inside]])
    n = len(p)
    lookup = -np.ones(I.shape, dtype=np.int64)
    lookup[gi[:, 0] - i[0], gi[:, 1] - j[0]] = np.arange(n)

    arms = np.empty((n, 4))
    nbr = -np.ones((n, 4), dtype=np.int64)
    bpts = np.empty((n, 4, 2))
    for d, (axis, sign) in enumerate(((0, 1), (0, -1), (1, 1), (1, -1))):
        s = np.abs(D.axis_exit(p, axis, sign) - p[:, axis])
        step = np.zeros(2, dtype=np.int64)
        step[axis] = sign
        q = gi + step
        qi = q[:, 0] - i[0]
        qj = q[:, 1] - j[0]
        inb = (qi >= 0) & (qi < I.shape[0]) & (qj >= 0) & (qj < I.shape[1])
        k = np.full(n, -1, dtype=np.int64)
        k[inb] = lookup[qi[inb], qj[inb]]
        regular = (k >= 0) & (s >= h * (1 - 1e-9))
        arms[:, d] = np.where(regular, h, np.minimum(s, h))
        nbr[:, d] = np.where(regular, k, -1)
        bp = p.copy()
        bp[:, axis] += sign * arms[:, d]
        bpts[:, d] = bp

    hr, hl, hu, hd = arms.T
    coef = np.column_stack([
        2.0 / (hr * (hl + hr)),
        2.0 / (hl * (hl + hr)),
        2.0 / (hu * (hd + hu)),
        2.0 / (hd * (hd + hu)),
    ]) * h * h
    diag = coef.sum(axis=1)
    reg = nbr >= 0
    rows = np.repeat(np.arange(n), 4).reshape(n, 4)
    A = sp.csr_matrix(
        (np.concatenate([diag, -coef[reg]]), (np.concatenate([np.arange(n), rows[reg]]), np.concatenate([np.arange(n), nbr[reg]]))),
        shape=(n, n),
    )
    # u = A^{-1} B f  =>  u(x) = (B^T A^{-T} e_x) . f
    src = int(lookup[-i[0], -j[0]])
    e = np.zeros(n)
    e[src] = 1.0
    lam = spla.spsolve(A.T.tocsc(), e)
    bmask = ~reg
    weights = (coef * lam[:, None])[bmask]
    nodes = bpts[bmask]
    return HarmonicMeasure(tuple(x), nodes, weights)


# ---------------------------------------------------------------------------
# public operations


def _poisson_measure(D: Disc, x: np.ndarray, nodes: int | None = None) -> HarmonicMeasure:
    c = np.array(D.center)
    rho = np.hypot(*(x - c)) / D.radius
    K = nodes or int(max(512, np.ceil(60.0 / max(1.0 - rho, 1e-12))))
    th = 2 * np.pi * np.arange(K) / K
    z = c + D.radius * np.column_stack([np.cos(th), np.sin(th)])
    P = (D.radius**2 - np.sum((x - c) ** 2)) / np.sum((z - x) ** 2, axis=1)
    w = P / K
    return HarmonicMeasure(tuple(x), z, w / w.sum())


@lru_cache(maxsize=256)
def _harmonic_measure_cached(D, x: tuple, resolution: int) -> HarmonicMeasure:
    x = np.array(x, dtype=float)
    if isinstance(D, Disc):
        return _poisson_measure(D, x)
    return _grid_harmonic_measure(D, x, resolution)


def harmonic_measure_continuum(D: ContinuumDomain, x, resolution: int = GRID_RESOLUTION) -> HarmonicMeasure:
    """Brownian exit distribution from ``x`` as weighted boundary nodes."""
    x = np.asarray(x, dtype=float)
    if not D.contains(x)[0]:
        raise DomainError(f"{tuple(x)} is not in the domain")
    return _harmonic_measure_cached(D, tuple(float(v) for v in x), int(resolution))


def log_conformal_radius(D: ContinuumDomain, points, method: str = "auto", resolution: int = GRID_RESOLUTION) -> np.ndarray:
    """Vectorized log r^D(x); see :func:`conformal_radius`."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    if not D.contains(p).all():
        raise DomainError("conformal radius requested outside the domain")
    if method == "auto":
        method = "closed" if isinstance(D, (Disc, Rectangle)) else "grid"
    if method == "closed":
        if isinstance(D, Disc):
            d2 = np.sum((p - np.array(D.center)) ** 2, axis=1)
            return np.log((D.radius**2 - d2) / D.radius)
        if isinstance(D, Rectangle):
            return _rect_log_conformal_radius(D, p)
        raise ValueError("no closed form for this shape")
    if method in ("grid", "quadrature"):
        out = np.empty(len(p))
        for k, x in enumerate(p):
            H = harmonic_measure_continuum(D, x, resolution)
            out[k] = np.dot(H.weights, np.log(np.hypot(*(H.nodes - x).T)))
        return out
    raise ValueError(f"unknown method {method!r}")


def conformal_radius(D: ContinuumDomain, x, method: str = "auto", resolution: int = GRID_RESOLUTION) -> float:
    """r^D(x) = exp( integral of log|x - z| against the harmonic measure from x ).

    ``method``: ``"closed"`` (disc, rectangle), ``"grid"`` (any shape; for the
    disc this is Poisson-kernel quadrature) or ``"auto"``.
    """
    return float(np.exp(log_conformal_radius(D, x, method, resolution)[0]))


def continuum_green(D: ContinuumDomain, x, y, method: str = "auto", resolution: int = GRID_RESOLUTION) -> float:
    """G^D(x, y) = -g log|x - y| + g * integral of log|y - z| against Pi^D(x, dz)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        raise DomainError("continuum Green function is singular on the diagonal")
    if not (D.contains(x)[0] and D.contains(y)[0]):
        raise DomainError("both points must lie in the domain")
    if method == "auto":
        method = "closed" if isinstance(D, (Disc, Rectangle)) else "grid"
    if method == "closed":
        if isinstance(D, Disc):
            c = complex(*D.center)
            zx, zy = complex(*x) - c, complex(*y) - c
            R = D.radius
            return float(G_CONST * np.log(abs(R * R - zx * np.conj(zy)) / (R * abs(zx - zy))))
        if isinstance(D, Rectangle):
            return float(_rect_green(D, x, y)[0])
        raise ValueError("no closed form for this shape")
    H = harmonic_measure_continuum(D, x, resolution)
    harm = np.dot(H.weights, np.log(np.hypot(*(H.nodes - y).T)))
    return float(-G_CONST * np.log(np.hypot(*(x - y))) + G_CONST * harm)
