"""Continuum domains, their lattice approximations and lattice geometry.

A continuum domain is an open rectangle, an open disc, or a finite union of
open rectangles.  ``discretize(D, N)`` returns the lattice domain

    D_N = {x in Z^2 : d_inf(x/N, D^c) > 1/N}

with vertices in lexicographic order.  All distances to the complement are
computed in closed form; nothing is rasterized.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "Rectangle",
    "Disc",
    "RectUnion",
    "ContinuumDomain",
    "LatticeDomain",
    "DeltaInterior",
    "discretize",
    "delta_interior",
    "boundary",
    "linf_ball",
    "unit_square",
    "unit_disc",
]

_OFFSET = np.int64(1 << 31)
_NEIGHBORS = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)], dtype=np.int64)


def _pts(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.shape == (2,):
        p = p[None, :]
    return p


@dataclass(frozen=True)
class Rectangle:
    """Open axis-aligned rectangle (x0, x1) x (y0, y1)."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def contains(self, points) -> np.ndarray:
        p = _pts(points)
        return (p[:, 0] > self.x0) & (p[:, 0] < self.x1) & (p[:, 1] > self.y0) & (p[:, 1] < self.y1)

    def linf_dist(self, points) -> np.ndarray:
        p = _pts(points)
        d = np.minimum.reduce([p[:, 0] - self.x0, self.x1 - p[:, 0], p[:, 1] - self.y0, self.y1 - p[:, 1]])
        return np.maximum(d, 0.0)

    def scaled(self, s: float) -> "Rectangle":
        return Rectangle(s * self.x0, s * self.y0, s * self.x1, s * self.y1)

    def translated(self, a) -> "Rectangle":
        return Rectangle(self.x0 + a[0], self.y0 + a[1], self.x1 + a[0], self.y1 + a[1])

    def axis_exit(self, points, axis: int, sign: int) -> np.ndarray:
        """Coordinate (along ``axis``) where a ray from inside leaves the rectangle."""
        p = _pts(points)
        lo, hi = (self.x0, self.x1) if axis == 0 else (self.y0, self.y1)
        return np.full(len(p), hi if sign > 0 else lo)


@dataclass(frozen=True)
class Disc:
    """Open Euclidean disc."""

    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        r = self.radius
        return (self.cx - r, self.cy - r, self.cx + r, self.cy + r)

    @property
    def area(self) -> float:
        return np.pi * self.radius**2

    def contains(self, points) -> np.ndarray:
        p = _pts(points)
        return np.hypot(p[:, 0] - self.cx, p[:, 1] - self.cy) < self.radius

    def linf_dist(self, points) -> np.ndarray:
        # Largest s such that the square of half-width s about p fits in the
        # disc: its far corner (|dx|+s, |dy|+s) must stay within the radius.
        p = _pts(points)
        a = np.abs(p[:, 0] - self.cx)
        b = np.abs(p[:, 1] - self.cy)
        disc = (a + b) ** 2 - 2.0 * (a * a + b * b - self.radius**2)
        s = 0.5 * (-(a + b) + np.sqrt(np.maximum(disc, 0.0)))
        return np.where(self.contains(p), np.maximum(s, 0.0), 0.0)

    def scaled(self, s: float) -> "Disc":
        return Disc(s * self.cx, s * self.cy, s * self.radius)

    def translated(self, a) -> "Disc":
        return Disc(self.cx + a[0], self.cy + a[1], self.radius)

    def axis_exit(self, points, axis: int, sign: int) -> np.ndarray:
        p = _pts(points)
        c = np.array(self.center)
        other = 1 - axis
        half = np.sqrt(np.maximum(self.radius**2 - (p[:, other] - c[other]) ** 2, 0.0))
        return c[axis] + sign * half


@dataclass(frozen=True)
class RectUnion:
    """Finite union of open rectangles.

    Shared edges of abutting members are *not* part of the union (the union
    of open sets), so they act as slits.
    """

    rects: tuple[Rectangle, ...]

    def __post_init__(self):
        if len(self.rects) == 0:
            raise ValueError("empty rectangle union")
        object.__setattr__(self, "rects", tuple(self.rects))

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        b = np.array([r.bbox for r in self.rects])
        return (b[:, 0].min(), b[:, 1].min(), b[:, 2].max(), b[:, 3].max())

    @cached_property
    def _arrangement(self):
        xs = np.unique(np.concatenate([[r.x0, r.x1] for r in self.rects]))
        ys = np.unique(np.concatenate([[r.y0, r.y1] for r in self.rects]))
        return xs, ys

    @cached_property
    def _complement_boxes(self) -> np.ndarray:
        # Closed boxes (lo_x, lo_y, hi_x, hi_y) whose union is D^c inside the
        # bounding box: every open cell, open edge and vertex of the edge
        # arrangement lies entirely in D or entirely in D^c.
        xs, ys = self._arrangement
        xm = 0.5 * (xs[1:] + xs[:-1])
        ym = 0.5 * (ys[1:] + ys[:-1])
        boxes = []
        for xa, xb, px in [(a, b, m) for a, b, m in zip(xs[:-1], xs[1:], xm)] + [(v, v, v) for v in xs]:
            for ya, yb, py in [(a, b, m) for a, b, m in zip(ys[:-1], ys[1:], ym)] + [(v, v, v) for v in ys]:
                if not self.contains([px, py])[0]:
                    boxes.append((xa, ya, xb, yb))
        return np.array(boxes, dtype=float).reshape(-1, 4)

    @property
    def area(self) -> float:
        xs, ys = self._arrangement
        xm = 0.5 * (xs[1:] + xs[:-1])
        ym = 0.5 * (ys[1:] + ys[:-1])
        X, Y = np.meshgrid(xm, ym, indexing="ij")
        inside = self.contains(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
        cell = np.outer(np.diff(xs), np.diff(ys))
        return float((cell * inside).sum())

    def contains(self, points) -> np.ndarray:
        p = _pts(points)
        out = np.zeros(len(p), dtype=bool)
        for r in self.rects:
            out |= r.contains(p)
        return out

    def linf_dist(self, points) -> np.ndarray:
        p = _pts(points)
        x0, y0, x1, y1 = self.bbox
        d = np.minimum.reduce([p[:, 0] - x0, x1 - p[:, 0], p[:, 1] - y0, y1 - p[:, 1]])
        for lx, ly, hx, hy in self._complement_boxes:
            gap = np.maximum.reduce([lx - p[:, 0], p[:, 0] - hx, ly - p[:, 1], p[:, 1] - hy, np.zeros(len(p))])
            d = np.minimum(d, gap)
        return np.where(self.contains(p), np.maximum(d, 0.0), 0.0)

    def scaled(self, s: float) -> "RectUnion":
        return RectUnion(tuple(r.scaled(s) for r in self.rects))

    def translated(self, a) -> "RectUnion":
        return RectUnion(tuple(r.translated(a) for r in self.rects))

    def axis_exit(self, points, axis: int, sign: int) -> np.ndarray:
        """Exit coordinate of an axis ray started inside the union.

        Walks through members: at each step the ray point jumps to the far
        edge of every member containing it.  Stops once no member contains
        the point in its interior.
        """
        p = _pts(points).copy()
        coord = p[:, axis].copy()
        for _ in range(len(self.rects) + 1):
            q = p.copy()
            q[:, axis] = coord
            new = coord.copy()
            for r in self.rects:
                inside = r.contains(q)
                edge = r.axis_exit(q, axis, sign)
                if sign > 0:
                    new = np.where(inside, np.maximum(new, edge), new)
                else:
                    new = np.where(inside, np.minimum(new, edge), new)
            if np.array_equal(new, coord):
                break
            coord = new
        return coord


ContinuumDomain = Union[Rectangle, Disc, RectUnion]


def unit_square() -> Rectangle:
    return Rectangle(0.0, 0.0, 1.0, 1.0)


def unit_disc() -> Disc:
    return Disc(0.0, 0.0, 1.0)


def _keys(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64).reshape(-1, 2)
    # x * 2^32 + (y + 2^31) is monotone in (x, y) lexicographically and fits int64
    return v[:, 0] * np.int64(1 << 32) + (v[:, 1] + _OFFSET)


def _unkeys(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=np.int64)
    return np.column_stack([k >> 32, (k & ((1 << 32) - 1)) - _OFFSET])


@dataclass(eq=False)
class LatticeDomain:
    """Finite vertex set of Z^2 in lexicographic order.

    ``vertices`` has shape (n, 2); ``index_of`` maps vertices back to
    positions in that array.  ``parent`` is the continuum domain the set was
    discretized from (None for hand-built sets) and ``N`` the scale.
    """

    N: int
    vertices: np.ndarray
    parent: ContinuumDomain | None = None
    _keys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.int64).reshape(-1, 2)
        k = _keys(v)
        order = np.argsort(k, kind="stable")
        k = k[order]
        if len(k) > 1 and np.any(k[1:] == k[:-1]):
            k = np.unique(k)
        self._keys = k
        self.vertices = _unkeys(k)
        self.vertices.setflags(write=False)

    @classmethod
    def from_vertices(cls, vertices: Iterable[Sequence[int]], N: int = 1, parent=None) -> "LatticeDomain":
        return cls(N, np.array(list(vertices), dtype=np.int64).reshape(-1, 2), parent)

    @classmethod
    def rectangle(cls, width: int, height: int, origin=(0, 0), N: int = 1, parent=None) -> "LatticeDomain":
        """The full block {x0..x0+w-1} x {y0..y0+h-1}."""
        i, j = np.meshgrid(np.arange(width), np.arange(height), indexing="ij")
        v = np.column_stack([i.ravel() + origin[0], j.ravel() + origin[1]])
        return cls(N, v, parent)

    def __len__(self) -> int:
        return len(self._keys)

    def __eq__(self, other) -> bool:
        return isinstance(other, LatticeDomain) and np.array_equal(self._keys, other._keys)

    def __hash__(self):
        return hash(self._keys.tobytes())

    @property
    def size(self) -> int:
        return len(self._keys)

    def index_of(self, vertices) -> np.ndarray:
        """Dense indices of ``vertices``; -1 where a vertex is not in the set."""
        k = _keys(vertices)
        pos = np.searchsorted(self._keys, k)
        pos = np.minimum(pos, max(len(self._keys) - 1, 0))
        ok = len(self._keys) > 0
        hit = (self._keys[pos] == k) if ok else np.zeros(len(k), dtype=bool)
        return np.where(hit, pos, -1)

    def contains(self, vertices) -> np.ndarray:
        return self.index_of(vertices) >= 0

    def issubset(self, other: "LatticeDomain") -> bool:
        return bool(np.all(np.isin(self._keys, other._keys)))

    @cached_property
    def bbox(self) -> tuple[int, int, int, int]:
        """Inclusive integer bounds (xmin, ymin, xmax, ymax)."""
        if self.size == 0:
            raise ValueError("empty lattice domain has no bounding box")
        v = self.vertices
        return (int(v[:, 0].min()), int(v[:, 1].min()), int(v[:, 0].max()), int(v[:, 1].max()))

    @cached_property
    def is_rectangle(self) -> bool:
        if self.size == 0:
            return False
        x0, y0, x1, y1 = self.bbox
        return self.size == (x1 - x0 + 1) * (y1 - y0 + 1)

    @property
    def shape(self) -> tuple[int, int]:
        x0, y0, x1, y1 = self.bbox
        return (x1 - x0 + 1, y1 - y0 + 1)

    def to_grid(self, values, fill=np.nan) -> np.ndarray:
        """Embed per-vertex values into the bounding-box array, [..., i, j] <-> (x0+i, y0+j)."""
        values = np.asarray(values)
        x0, y0, _, _ = self.bbox
        w, h = self.shape
        out = np.full(values.shape[:-1] + (w, h), fill, dtype=np.result_type(values.dtype, np.asarray(fill).dtype))
        out[..., self.vertices[:, 0] - x0, self.vertices[:, 1] - y0] = values
        return out

    def from_grid(self, grid) -> np.ndarray:
        x0, y0, _, _ = self.bbox
        grid = np.asarray(grid)
        return grid[..., self.vertices[:, 0] - x0, self.vertices[:, 1] - y0]

    @cached_property
    def mask(self) -> np.ndarray:
        return self.to_grid(np.ones(self.size, dtype=bool), fill=False)

    def positions(self) -> np.ndarray:
        """Continuum positions x/N."""
        return self.vertices / float(self.N)

    @cached_property
    def adjacency(self):
        """Sparse 0/1 nearest-neighbour adjacency restricted to the set."""
        import scipy.sparse as sp

        n = self.size
        rows, cols = [], []
        for e in _NEIGHBORS:
            j = self.index_of(self.vertices + e)
            ok = j >= 0
            rows.append(np.nonzero(ok)[0])
            cols.append(j[ok])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))

    @cached_property
    def laplacian(self):
        """I - P with P the simple random walk kernel killed on leaving the set."""
        import scipy.sparse as sp

        return (sp.identity(self.size, format="csr") - 0.25 * self.adjacency).tocsc()

    def lattice_dist_to_complement(self) -> np.ndarray:
        """Integer d_inf(x, Z^2 minus the set) for every vertex."""
        from scipy.ndimage import distance_transform_cdt

        padded = np.pad(self.mask, 1, constant_values=False)
        d = distance_transform_cdt(padded, metric="chessboard")[1:-1, 1:-1]
        return self.from_grid(d).astype(np.int64)


def discretize(D: ContinuumDomain, N: int) -> LatticeDomain:
    """Lattice approximation of ``D`` at scale ``N``.

    Evaluated in the scaled frame (N D, integer points, threshold 1) so that
    dyadic and integer geometry is decided without rounding.
    """
    if int(N) != N or N < 1:
        raise ValueError("scale N must be a positive integer")
    N = int(N)
    DN = D.scaled(float(N))
    x0, y0, x1, y1 = DN.bbox
    xs = np.arange(int(np.floor(x0)), int(np.ceil(x1)) + 1)
    ys = np.arange(int(np.floor(y0)), int(np.ceil(y1)) + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    cand = np.column_stack([X.ravel(), Y.ravel()])
    keep = DN.linf_dist(cand.astype(float)) > 1.0
    return LatticeDomain(N, cand[keep], parent=D)


@dataclass(frozen=True)
class DeltaInterior:
    """Predicate for D^delta = {x in D : d_inf(x, D^c) > delta}."""

    domain: ContinuumDomain
    delta: float

    def __call__(self, points) -> np.ndarray:
        return self.domain.linf_dist(points) > self.delta

    def lattice_mask(self, L: LatticeDomain) -> np.ndarray:
        return self(L.positions()) if L.size else np.zeros(0, dtype=bool)

    def is_empty(self) -> bool:
        return _linf_inradius(self.domain) <= self.delta


def _linf_inradius(D: ContinuumDomain) -> float:
    if isinstance(D, Rectangle):
        return 0.5 * min(D.width, D.height)
    if isinstance(D, Disc):
        return D.radius / np.sqrt(2.0)
    # d_inf to the complement is 1-Lipschitz; a grid search followed by local
    # refinement brackets the maximum.
    x0, y0, x1, y1 = D.bbox
    best, h = 0.0, max(x1 - x0, y1 - y0) / 256
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    span = (x1 - x0, y1 - y0)
    for _ in range(6):
        xs = np.linspace(cx - span[0] / 2, cx + span[0] / 2, 257)
        ys = np.linspace(cy - span[1] / 2, cy + span[1] / 2, 257)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        d = D.linf_dist(np.column_stack([X.ravel(), Y.ravel()]))
        k = int(np.argmax(d))
        best = max(best, float(d[k]))
        cx, cy = X.ravel()[k], Y.ravel()[k]
        span = (4 * span[0] / 256, 4 * span[1] / 256)
    return best


def delta_interior(D: ContinuumDomain, delta: float) -> DeltaInterior:
    if not delta > 0:
        raise ValueError("delta must be positive")
    return DeltaInterior(D, float(delta))


def boundary(L: LatticeDomain) -> np.ndarray:
    """Outer vertex boundary: vertices outside L with a nearest neighbour in L, sorted."""
    if L.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    nb = np.concatenate([L.vertices + e for e in _NEIGHBORS])
    k = np.unique(_keys(nb))
    k = k[~np.isin(k, L._keys)]
    return _unkeys(k)


def linf_ball(x, r: float) -> np.ndarray:
    """Lattice points y with d_inf(x, y) < r, in lexicographic order."""
    if not r > 0:
        raise ValueError("radius must be positive")
    k = int(np.ceil(r)) - 1
    d = np.arange(-k, k + 1)
    i, j = np.meshgrid(d, d, indexing="ij")
    return np.column_stack([i.ravel() + x[0], j.ravel() + x[1]]).astype(np.int64)
