"""Near-extremal and extremal point processes of a DGFF sample.

For a field ``h`` on ``D_N``:

* ``zeta_measure``: atoms at x/N with depth (m_N - h_x)/sqrt(log N) and
  weight exp(alpha (h_x - m_N)) / log N;
* ``lattice_clqg``: its spatial marginal;
* ``phi_normed_measure``: weights multiplied by Phi(depth);
* ``extract_structured``: r_N-local maxima with their local cluster shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.ndimage import maximum_filter

from .green.constants import ALPHA, C_STAR, G_CONST, SQRT_G
from .measure import PointMeasure
from .sampler.lattice import Field

__all__ = [
    "m_of",
    "zeta_measure",
    "lattice_clqg",
    "NormingSpec",
    "phi_normed_measure",
    "c_of_phi",
    "ClusterAtom",
    "extract_structured",
    "extremal_projection",
    "default_r_N",
]


class ScaleError(ValueError):
    """Scale too small for the log N normalization."""


class EvaluationError(ValueError):
    """Norming function evaluated outside its table."""


class CertificateError(ValueError):
    """Norming function fails the integrability certificate."""


def m_of(N) -> float:
    """Centering 2 sqrt(g) log N - (3/4) sqrt(g) log log(max(N, e))."""
    N = float(N)
    if N < 1:
        raise ValueError("N must be >= 1")
    return 2 * SQRT_G * np.log(N) - 0.75 * SQRT_G * np.log(np.log(max(N, np.e)))


def _logN(h: Field) -> float:
    if h.N < 2:
        raise ScaleError("near-extremal measures need N >= 2")
    return float(np.log(h.N))


def zeta_measure(h: Field) -> PointMeasure:
    lN = _logN(h)
    m = m_of(h.N)
    depth = (m - h.values) / np.sqrt(lN)
    weight = np.exp(ALPHA * (h.values - m)) / lN
    return PointMeasure(h.domain.positions(), weight, depth, h.N, h.domain.parent)


def lattice_clqg(h: Field) -> PointMeasure:
    return zeta_measure(h).spatial()


@dataclass(frozen=True)
class NormingSpec:
    """Choice of Phi with an integrability certificate.

    kind: ``"one"`` (Phi = 1), ``"identity"`` (Phi(t) = t) or ``"table"``
    (linear interpolation of ``values`` at ``nodes``).  ``scale`` multiplies
    Phi.  ``kappa`` must lie in (0, 1/(2g)); ``tail_bound`` M certifies
    |Phi(t)| <= M exp(kappa t^2) beyond the last table node.
    """

    kind: str = "one"
    nodes: tuple = ()
    values: tuple = ()
    kappa: float = 0.25
    scale: float = 1.0
    tail_bound: float | None = None

    def __post_init__(self):
        if self.kind not in ("one", "identity", "table"):
            raise ValueError(f"unknown norming kind {self.kind!r}")
        if not 0 < self.kappa < 1 / (2 * G_CONST):
            raise CertificateError(f"kappa={self.kappa} outside (0, 1/(2g))")
        if self.kind == "table":
            t = np.asarray(self.nodes, dtype=float)
            if len(t) < 2 or len(t) != len(self.values) or np.any(np.diff(t) <= 0):
                raise ValueError("table needs >= 2 strictly increasing nodes and matching values")
            object.__setattr__(self, "nodes", tuple(float(v) for v in t))
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @classmethod
    def table(cls, nodes, values, **kw) -> "NormingSpec":
        return cls("table", tuple(nodes), tuple(values), **kw)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "one":
            out = np.ones_like(t)
        elif self.kind == "identity":
            out = t.copy()
        else:
            lo, hi = self.nodes[0], self.nodes[-1]
            bad = (t < lo) | (t > hi)
            if np.any(bad):
                raise EvaluationError(f"depth {float(t[bad].flat[0])} outside the Phi table [{lo}, {hi}]")
            out = np.interp(t, self.nodes, self.values)
        return self.scale * out

    def tail_constant(self) -> float | None:
        """M with |Phi(t)| <= M exp(kappa t^2) for all large t (None if uncertified)."""
        if self.kind == "one":
            return abs(self.scale)
        if self.kind == "identity":
            return abs(self.scale) / np.sqrt(2 * np.e * self.kappa)
        return None if self.tail_bound is None else abs(self.scale) * self.tail_bound


def phi_normed_measure(h: Field, spec: NormingSpec) -> PointMeasure:
    z = zeta_measure(h)
    return PointMeasure(z.positions, spec(z.depths) * z.weights, None, h.N, z.domain)


C_PHI_UPPER = 20 * SQRT_G


def c_of_phi(spec: NormingSpec) -> float:
    """c(Phi) = c_star * int_0^inf Phi(t) t exp(-t^2/(2g)) dt.

    Quadrature on [0, 20 sqrt(g)] (or the part of it covered by a table),
    plus the certified Gaussian tail bound; the combined error budget is
    1e-8 * c_star.
    """
    upper = C_PHI_UPPER
    lower = 0.0
    points = None
    if spec.kind == "table":
        upper = min(upper, spec.nodes[-1])
        if spec.nodes[0] > 0:
            raise CertificateError("Phi table does not cover t = 0")
        points = [p for p in spec.nodes if lower < p < upper][:200] or None
    beta = 1 / (2 * G_CONST) - spec.kappa
    M = spec.tail_constant()
    if upper < C_PHI_UPPER and M is None:
        raise CertificateError("Phi table stops before 20 sqrt(g) and no tail bound was given")
    tail = 0.0 if M is None else M * np.exp(-beta * upper**2) / (2 * beta)
    if tail > 1e-8:
        raise CertificateError(f"tail bound {tail:.3g} exceeds the error budget")
    if upper <= lower:
        return 0.0
    f = lambda t: float(spec(t)) * t * np.exp(-t * t / (2 * G_CONST))
    val, err = integrate.quad(f, lower, upper, points=points, epsabs=1e-13, epsrel=1e-12, limit=500)
    if err + tail > 1e-8:
        raise CertificateError(f"quadrature error {err:.3g} exceeds the error budget")
    return C_STAR * val


@dataclass(eq=False)
class ClusterAtom:
    """An r_N-local maximum at ``vertex``.

    ``shape[rho + dx, rho + dy] = h_x - h_{x + (dx, dy)}``; NaN marks window
    sites outside the domain.
    """

    vertex: tuple[int, int]
    position: np.ndarray
    height: float
    shape: np.ndarray = field(repr=False)

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.shape)


def default_r_N(N: int) -> float:
    return float(max(1, int(np.floor(np.sqrt(N)))))


def _lex_smaller_offsets(k: int) -> list[tuple[int, int]]:
    return [(dx, dy) for dx in range(-k, 1) for dy in range(-k, k + 1) if dx < 0 or dy < 0]


def local_max_indices(h: Field, r_N: float) -> np.ndarray:
    """Vertex indices of r_N-local maxima (lexicographic tie-break)."""
    if r_N < 1:
        raise ValueError("r_N must be >= 1")
    L = h.domain
    k = int(np.ceil(r_N)) - 1
    grid = L.to_grid(h.values, fill=-np.inf)
    mx = maximum_filter(grid, size=2 * k + 1, mode="constant", cval=-np.inf)
    ci, cj = np.nonzero((grid == mx) & L.mask)
    vals = grid[ci, cj]
    keep = np.ones(len(ci), dtype=bool)
    W, H = grid.shape
    for dx, dy in _lex_smaller_offsets(k):
        ii, jj = ci + dx, cj + dy
        ok = (ii >= 0) & (ii < W) & (jj >= 0) & (jj < H)
        tie = np.zeros(len(ci), dtype=bool)
        tie[ok] = grid[ii[ok], jj[ok]] == vals[ok]
        keep &= ~tie
    x0, y0, _, _ = L.bbox
    verts = np.column_stack([ci[keep] + x0, cj[keep] + y0])
    return np.sort(L.index_of(verts))


def extract_structured(h: Field, r_N: float | None = None, window: int = 5) -> list[ClusterAtom]:
    r_N = default_r_N(h.N) if r_N is None else r_N
    L = h.domain
    idx = local_max_indices(h, r_N)
    m = m_of(h.N) if h.N >= 1 else 0.0
    grid = np.pad(L.to_grid(h.values, fill=np.nan), window, constant_values=np.nan)
    x0, y0, _, _ = L.bbox
    atoms = []
    for i in idx:
        vx, vy = (int(c) for c in L.vertices[i])
        gi, gj = vx - x0 + window, vy - y0 + window
        win = grid[gi - window : gi + window + 1, gj - window : gj + window + 1]
        hx = h.values[i]
        atoms.append(ClusterAtom((vx, vy), np.array([vx, vy]) / L.N, float(hx - m), hx - win))
    return atoms


def extremal_projection(atoms: list[ClusterAtom]) -> list[tuple[np.ndarray, float]]:
    return [(a.position, a.height) for a in atoms]
