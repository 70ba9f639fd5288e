"""Finite-N statistical checks of DGFF limit laws.

Every check returns a small report object whose ``passed`` flag is computed
from stored numbers only, so serialized reports can be re-judged.  Random
calibration draws use reserved streams (ids >= 2**63) of the caller's seed.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri

from .domain import ContinuumDomain, Disc, LatticeDomain, Rectangle, delta_interior
from .extremes import NormingSpec, c_of_phi, local_max_indices, m_of, zeta_measure
from .green.constants import ALPHA, C0, G_CONST
from .green.continuum import conformal_radius, log_conformal_radius
from .green.lattice import green_asymptotics_residual, green_column, green_dense
from .measure import PointMeasure
from .sampler.continuum import HtBasis, zt_cell_masses
from .sampler.lattice import Field, GmDecomposition, enclosing_rectangle, sample_field, RestrictionOperator
from .sampler.rng import RESERVED_STREAM_BASE, RngStream, streams

__all__ = [
    "GofReport",
    "TailFit",
    "DegenerateSampleError",
    "InsufficientDataError",
    "weighted_ks",
    "truncated_rayleigh_cdf",
    "rayleigh_gof",
    "rayleigh_calibration",
    "NormingRatio",
    "norming_masses",
    "norming_ratio",
    "norming_ratio_from_masses",
    "fit_max_tail",
    "max_tail",
    "check_tail_grid",
    "covariance_test",
    "corrected_threshold",
    "covariance_sums",
    "covariance_report",
    "cross_covariance_test",
    "random_pairs",
    "gm_check",
    "ResidualTable",
    "green_asymptotics_report",
    "zt_mean_test",
    "zt_report",
    "ZtMassKernel",
    "integral_r2",
    "CorrelationEstimate",
    "pooled_correlation",
    "box_partition",
    "box_statistics",
    "intensity_correlation",
]


class DegenerateSampleError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


@dataclass
class GofReport:
    statistic: str
    value: float
    n: float
    threshold: float
    per_seed: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.threshold)

    def to_dict(self) -> dict:
        d = _jsonable(asdict(self))
        d["passed"] = self.passed
        return d


# ---------------------------------------------------------------------------
# Rayleigh depth law


def truncated_rayleigh_cdf(t, t_max: float) -> np.ndarray:
    t = np.clip(np.asarray(t, dtype=float), 0.0, t_max)
    return -np.expm1(-t * t / (2 * G_CONST)) / -np.expm1(-t_max * t_max / (2 * G_CONST))


def truncated_rayleigh_sample(u: np.ndarray, t_max: float) -> np.ndarray:
    Z = -np.expm1(-t_max * t_max / (2 * G_CONST))
    return np.sqrt(-2 * G_CONST * np.log1p(-u * Z))


def weighted_ks(depths: np.ndarray, weights: np.ndarray, cdf: Callable) -> float:
    """sup_t |F_w(t) - F(t)| for the weighted empirical CDF F_w."""
    o = np.argsort(depths, kind="stable")
    d = depths[o]
    w = weights[o] / weights.sum()
    cw = np.cumsum(w)
    F = cdf(d)
    return float(max(np.max(cw - F), np.max(F - (cw - w))))


def _pool(zetas: Sequence[PointMeasure], delta: float, t_max: float, rel_tol: float):
    D, W = [], []
    for z in zetas:
        keep = (z.depths >= 0) & (z.depths <= t_max)
        if z.domain is not None:
            keep &= delta_interior(z.domain, delta)(z.positions)
        zz = z.restrict(keep)
        if rel_tol > 0:
            zz = zz.compress(rel_tol)
        D.append(zz.depths)
        W.append(zz.weights)
    d = np.concatenate(D) if D else np.zeros(0)
    w = np.concatenate(W) if W else np.zeros(0)
    return d, w


def rayleigh_gof(
    zetas: Sequence[PointMeasure],
    delta: float = 0.1,
    t_max: float = 4.0,
    level: float = 0.01,
    n_calib: int = 200,
    rng: RngStream | None = None,
    rel_tol: float = 0.0,
    calib_rel_tol: float = 1e-4,
    calib_max_atoms: int = 200_000,
) -> GofReport:
    """Weighted KS distance of pooled depths to 1 - exp(-t^2/(2g)) on [0, t_max].

    The threshold is the (1 - level) quantile of the same statistic for
    synthetic depths drawn from the target law with the observed weights.
    Calibration uses the heaviest atoms carrying all but ``calib_rel_tol``
    of the mass (at most ``calib_max_atoms``).
    """
    d, w = _pool(zetas, delta, t_max, rel_tol)
    if len(w) == 0 or not w.sum() > 0:
        raise DegenerateSampleError("no pooled weight in the selected window")
    cdf = lambda t: truncated_rayleigh_cdf(t, t_max)
    value = weighted_ks(d, w, cdf)

    cw = PointMeasure(np.zeros((len(w), 2)), w).compress(calib_rel_tol).weights
    if len(cw) > calib_max_atoms:
        cw = np.sort(cw)[-calib_max_atoms:]
    rng = rng or RngStream(0, RESERVED_STREAM_BASE)
    null = np.empty(n_calib)
    for b in range(n_calib):
        null[b] = weighted_ks(truncated_rayleigh_sample(rng.uniform(len(cw)), t_max), cw, cdf)
    threshold = float(np.quantile(null, 1 - level))
    n_eff = float(w.sum() ** 2 / np.sum(w * w))
    return GofReport("weighted_ks_rayleigh", value, n_eff, threshold, details={"atoms": int(len(w)), "t_max": t_max, "delta": delta})


def rayleigh_calibration(runs: int = 100, n: int = 1000, master_seed: int = 0, t_max: float = 4.0, level: float = 0.01, n_calib: int = 500) -> list[GofReport]:
    """rayleigh_gof on exact synthetic Rayleigh depths with unit weights."""
    from .domain import unit_square

    out = []
    for r in range(runs):
        rng = RngStream(master_seed, r)
        u = rng.uniform(n)
        t = np.sqrt(-2 * G_CONST * np.log(u))
        t = t[t <= t_max]
        z = PointMeasure(np.full((len(t), 2), 0.5), np.ones(len(t)), t, None, unit_square())
        out.append(rayleigh_gof([z], t_max=t_max, level=level, n_calib=n_calib, rng=RngStream(master_seed, RESERVED_STREAM_BASE + r)))
    return out


# ---------------------------------------------------------------------------
# norming-constant ratios


@dataclass
class NormingRatio:
    ratios: np.ndarray
    median: float
    ci: tuple[float, float]
    predicted: float
    excluded: int

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def norming_masses(h: Field, specs: Sequence[NormingSpec], delta: float = 0.1) -> np.ndarray:
    """Total mass on D^delta of each Phi-normed measure of one field."""
    z = zeta_measure(h)
    keep = delta_interior(z.domain, delta)(z.positions) if z.domain is not None else np.ones(len(z), bool)
    d, w = z.depths[keep], z.weights[keep]
    return np.array([float(np.sum(s(d) * w)) for s in specs])


def _boot_median(x: np.ndarray, rng: RngStream, n_boot: int, level: float) -> tuple[float, float]:
    if np.all(x == x[0]):
        return (float(x[0]), float(x[0]))
    gen = rng.generator()
    idx = gen.integers(0, len(x), size=(n_boot, len(x)))
    meds = np.median(x[idx], axis=1)
    a = (1 - level) / 2
    return (float(np.quantile(meds, a)), float(np.quantile(meds, 1 - a)))


def norming_ratio_from_masses(mass_a, mass_b, specA: NormingSpec, specB: NormingSpec, rng=None, n_boot: int = 2000, level: float = 0.95) -> NormingRatio:
    mass_a = np.asarray(mass_a, dtype=float)
    mass_b = np.asarray(mass_b, dtype=float)
    ok = mass_b != 0
    ratios = mass_a[ok] / mass_b[ok]
    if len(ratios) == 0:
        raise DegenerateSampleError("every field has zero denominator mass")
    rng = rng or RngStream(0, RESERVED_STREAM_BASE + 1)
    cb = c_of_phi(specB)
    predicted = c_of_phi(specA) / cb if cb != 0 else float("nan")
    return NormingRatio(ratios, float(np.median(ratios)), _boot_median(ratios, rng, n_boot, level), float(predicted), int((~ok).sum()))


def norming_ratio(fields: Sequence[Field], specA: NormingSpec, specB: NormingSpec, delta: float = 0.1, rng=None, n_boot: int = 2000, min_fields: int = 30) -> NormingRatio:
    if len(fields) < min_fields:
        raise InsufficientDataError(f"need at least {min_fields} fields, got {len(fields)}")
    m = np.array([norming_masses(h, (specA, specB), delta) for h in fields])
    return norming_ratio_from_masses(m[:, 0], m[:, 1], specA, specB, rng, n_boot)


# ---------------------------------------------------------------------------
# maximum tail


@dataclass
class TailFit:
    u_grid: np.ndarray
    log_tail: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    slope_se: float
    n: int

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def fit_max_tail(centered_maxima, u_grid, min_count: int = 20, min_fields: int = 0) -> TailFit:
    """Fit log(P(M > u)/u) = c + slope * u by generalized least squares.

    Uses the delta-method covariance of the log empirical survival function,
    Cov(log S(u_i), log S(u_j)) = (1/S(min(u_i, u_j)) - 1)/n; only grid points
    with at least ``min_count`` exceedances enter.
    """
    M = np.asarray(centered_maxima, dtype=float)
    u = np.asarray(u_grid, dtype=float)
    if np.any(np.diff(u) <= 0):
        raise ValueError("u grid must be strictly increasing")
    n = len(M)
    if n < min_fields:
        raise InsufficientDataError(f"need at least {min_fields} fields, got {n}")
    counts = np.array([(M > x).sum() for x in u])
    keep = counts >= min_count
    if keep.sum() < 3:
        raise InsufficientDataError(f"only {int(keep.sum())} grid points have >= {min_count} exceedances")
    uu, S = u[keep], counts[keep] / n
    y = np.log(S / uu)
    k = np.arange(len(S))
    C = (1.0 / S[np.minimum.outer(k, k)] - 1.0) / n
    X = np.column_stack([np.ones_like(uu), uu])
    Ci = np.linalg.inv(C)
    cov = np.linalg.inv(X.T @ Ci @ X)
    beta = cov @ X.T @ Ci @ y
    log_tail = np.full(len(u), np.nan)
    log_tail[keep] = np.log(S)
    return TailFit(u, log_tail, counts, float(beta[1]), float(beta[0]), float(np.sqrt(cov[1, 1])), n)


def check_tail_grid(u_grid, N: int) -> None:
    """The tail estimate is stated for 1 <= u < sqrt(log N)."""
    u = np.asarray(u_grid, dtype=float)
    hi = np.sqrt(np.log(N))
    if u.min() < 1 or u.max() >= hi:
        raise ValueError(f"u grid [{u.min()}, {u.max()}] leaves [1, sqrt(log N)) = [1, {hi:.4f})")


def max_tail(fields: Sequence[Field], u_grid, min_count: int = 20, min_fields: int = 1000, check_range: bool = True) -> TailFit:
    """Tail fit for the centered maxima max h - m_N of the given fields."""
    if check_range and fields:
        check_tail_grid(u_grid, fields[0].N)
    M = np.array([h.values.max() - m_of(h.N) for h in fields])
    return fit_max_tail(M, u_grid, min_count, min_fields)


# ---------------------------------------------------------------------------
# covariance of the samplers


def corrected_threshold(m: int, sigma: float = 3.0) -> float:
    """Bonferroni version of a two-sided ``sigma`` rule over ``m`` comparisons."""
    p = 2 * (1 - ndtr(sigma))
    return float(-ndtri(p / (2 * m)))


def random_pairs(n: int, m: int, rng: RngStream, diagonal: int | None = None) -> np.ndarray:
    """``m`` index pairs; the first ``diagonal`` (default m // 5) are (i, i)."""
    gen = rng.generator()
    k = m // 5 if diagonal is None else diagonal
    d = gen.choice(n, size=k, replace=n < k)
    off = gen.integers(0, n, size=(m - k, 2))
    return np.vstack([np.column_stack([d, d]), off]).astype(np.int64)


def _route_sampler(route, L: LatticeDomain, G, margin: int):
    if callable(route):
        return route
    if route == "dense":
        return lambda rngs: sample_field(L, rngs, "dense", G=G)
    if route == "spectral":
        return lambda rngs: sample_field(L, rngs, "spectral")
    if route == "restrict":
        V = enclosing_rectangle(L, margin)
        op = RestrictionOperator(V, L)
        vx0, vy0, _, _ = V.bbox

        def draw(rngs):
            parent = sample_field(V, rngs, "spectral")
            return op.split(parent)[0]

        return draw
    raise ValueError(f"unknown sampler route {route!r}")


def covariance_sums(draw, pairs: np.ndarray, master_seed: int, start: int, stop: int) -> np.ndarray:
    """sum over replicates start..stop-1 of h_x h_y at each pair."""
    h = np.atleast_2d(draw(streams(master_seed, range(start, stop))))
    return np.sum(h[:, pairs[:, 0]] * h[:, pairs[:, 1]], axis=0)


def covariance_report(G, pairs: np.ndarray, sums: np.ndarray, reps: int, name: str = "covariance") -> GofReport:
    gi, gj = pairs[:, 0], pairs[:, 1]
    emp = sums / reps
    exact = G.matrix[gi, gj]
    se = np.sqrt((G.diag[gi] * G.diag[gj] + exact**2) / reps)
    z = (emp - exact) / se
    return GofReport(
        name,
        float(np.max(np.abs(z))),
        reps,
        corrected_threshold(len(pairs)),
        details={"pairs": pairs, "empirical": emp, "exact": exact, "z": z},
    )


def covariance_test(
    route,
    L: LatticeDomain,
    pairs,
    reps: int,
    master_seed: int = 0,
    chunk: int = 2000,
    margin: int = 4,
    first_stream: int = 0,
) -> GofReport:
    """max over pairs of |empirical E[h_x h_y] - G(x, y)| / s.e.

    ``route`` is ``"dense"``, ``"spectral"``, ``"restrict"`` or a callable
    mapping a list of RngStreams to a (len, |L|) array.  ``pairs`` are
    vertex-index pairs.  Replicate i uses stream id ``first_stream + i``;
    chunks are summed in index order.
    """
    G = green_dense(L)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    draw = _route_sampler(route, L, G, margin)
    acc = np.zeros(len(pairs))
    for start in range(0, reps, chunk):
        acc += covariance_sums(draw, pairs, master_seed, first_stream + start, first_stream + min(reps, start + chunk))
    name = route if isinstance(route, str) else getattr(route, "__name__", "custom")
    return covariance_report(G, pairs, acc, reps, f"covariance_{name}")


def cross_covariance_test(V: LatticeDomain, U: LatticeDomain, pairs, reps: int, master_seed: int = 0, chunk: int = 2000) -> GofReport:
    """Empirical E[sub_x binding_y] against 0 for the split of a DGFF on V.

    Standard errors use the exact variances G^U(x, x) and G^V(y, y) - G^U(y, y).
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    GU = green_dense(U)
    vy = V.index_of(U.vertices)
    GVd = np.array([green_column(V, v)[j] for v, j in ((U.vertices[k], vy[k]) for k in np.unique(pairs[:, 1]))])
    var_b = dict(zip(np.unique(pairs[:, 1]).tolist(), GVd - GU.diag[np.unique(pairs[:, 1])]))
    op = RestrictionOperator(V, U)
    acc = np.zeros(len(pairs))
    for start in range(0, reps, chunk):
        parent = sample_field(V, streams(master_seed, range(start, min(reps, start + chunk))), "auto")
        sub, bind = op.split(np.atleast_2d(parent))
        acc += np.sum(sub[:, pairs[:, 0]] * bind[:, pairs[:, 1]], axis=0)
    emp = acc / reps
    vb = np.array([var_b[int(j)] for j in pairs[:, 1]])
    se = np.sqrt(GU.diag[pairs[:, 0]] * vb / reps)
    z = emp / se
    return GofReport("cross_covariance", float(np.max(np.abs(z))), reps, corrected_threshold(len(pairs)), details={"pairs": pairs, "empirical": emp, "z": z})


# ---------------------------------------------------------------------------
# Gibbs-Markov structure


def gm_check(decomp: GmDecomposition, tol: float = 1e-10) -> GofReport:
    parent, sub, binding = decomp.parent, decomp.sub, decomp.binding
    V, U = parent.domain, sub.domain
    u_idx = V.index_of(U.vertices)
    phi = parent.values.copy()
    phi[u_idx] = binding.values
    # values of phi on U's neighbours: inside V use phi, outside V zero
    acc = np.zeros(U.size)
    for e in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        j = V.index_of(U.vertices + np.array(e))
        ok = j >= 0
        acc[ok] += phi[j[ok]]
    harm = float(np.max(np.abs(binding.values - 0.25 * acc))) if U.size else 0.0
    add = float(np.max(np.abs(parent.values[u_idx] - sub.values - binding.values))) if U.size else 0.0
    return GofReport("gibbs_markov", max(harm, add), U.size, tol, details={"harmonicity": harm, "additivity": add})


# ---------------------------------------------------------------------------
# Green function asymptotics


@dataclass
class ResidualTable:
    N: list
    residual: list
    threshold: float
    c0: float

    @property
    def decreasing(self) -> bool:
        a = np.abs(self.residual)
        return bool(np.all(np.diff(a) < 0))

    @property
    def passed(self) -> bool:
        return self.decreasing and abs(self.residual[-1]) < self.threshold

    def to_dict(self) -> dict:
        d = _jsonable(asdict(self))
        d.update(decreasing=self.decreasing, passed=self.passed)
        return d


def green_asymptotics_report(D: ContinuumDomain, x, N_list, delta: float = 0.1, threshold: float = 0.01, c0: float = C0, method: str = "boundary") -> ResidualTable:
    from .domain import discretize

    x = np.asarray(x, dtype=float)
    if not delta_interior(D, delta)(x)[0]:
        from .green.lattice import DomainError

        raise DomainError(f"{tuple(x)} is not in the {delta}-interior of the domain")
    r = conformal_radius(D, x)
    res = [green_asymptotics_residual(discretize(D, N), x, delta, method, c0, r) for N in N_list]
    return ResidualTable(list(N_list), [float(v) for v in res], threshold, c0)


# ---------------------------------------------------------------------------
# Z_t expectation


def integral_r2(D: ContinuumDomain, A: ContinuumDomain | None) -> float:
    """int_A r^D(x)^2 dx by adaptive quadrature in coordinates adapted to A."""
    if A is None:
        return 0.0
    r2 = lambda x, y: float(np.exp(2 * log_conformal_radius(D, [x, y])[0]))
    if isinstance(A, Disc):
        f = lambda rho, th: r2(A.cx + rho * np.cos(th), A.cy + rho * np.sin(th)) * rho
        val, err = integrate.dblquad(f, 0, 2 * np.pi, 0, A.radius, epsabs=1e-11, epsrel=1e-10)
    elif isinstance(A, Rectangle):
        val, err = integrate.dblquad(lambda y, x: r2(x, y), A.x0, A.x1, A.y0, A.y1, epsabs=1e-11, epsrel=1e-10)
    else:
        raise ValueError("A must be a disc, a rectangle or None")
    if not np.isfinite(val) or err > 1e-6 * max(abs(val), 1.0):
        raise ArithmeticError(f"quadrature of r^2 over A failed (err={err})")
    return float(val)


class ZtMassKernel:
    """Evaluates Z_t(A) for batches of replicates from a fixed truncated basis."""

    def __init__(self, D: ContinuumDomain, A: ContinuumDomain | None, t: float, resolution=128):
        self.basis = HtBasis(D, resolution, t)
        pts = self.basis.grid.points
        inA = A.contains(pts) if A is not None else np.zeros(len(pts), dtype=bool)
        self.inA = inA & D.contains(pts)
        self.log_r2 = 2.0 * log_conformal_radius(D, pts)

    def masses(self, master_seed: int, start: int, stop: int) -> np.ndarray:
        ht = self.basis.sample(streams(master_seed, range(start, stop)))
        return zt_cell_masses(ht, self.log_r2)[:, self.inA].sum(axis=1)


def zt_report(masses: np.ndarray, target: float, modes: int | None = None) -> GofReport:
    masses = np.asarray(masses, dtype=float)
    reps = len(masses)
    mean = float(masses.mean())
    se = float(masses.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("inf")
    if se == 0:
        z = 0.0 if mean == target else float("inf")
    else:
        z = abs(mean - target) / se
    return GofReport("zt_mean", z, reps, 3.0, details={"mean": mean, "target": target, "se": se, "modes": modes})


def zt_mean_test(D: ContinuumDomain, A: ContinuumDomain | None, t: float, reps: int, master_seed: int = 0, resolution=128, chunk: int = 500) -> GofReport:
    """Empirical E[Z_t(A)] against alpha sqrt(t) int_A r^D(x)^2 dx."""
    target = ALPHA * np.sqrt(t) * integral_r2(D, A)
    k = ZtMassKernel(D, A, t, resolution)
    masses = np.concatenate([k.masses(master_seed, s, min(reps, s + chunk)) for s in range(0, reps, chunk)])
    return zt_report(masses, target, int(len(k.basis.lam)))


# ---------------------------------------------------------------------------
# lattice-cLQG mass versus extremal counts


@dataclass
class CorrelationEstimate:
    r: float
    ci: tuple[float, float]
    n_fields: int
    n_boxes: int

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def pooled_correlation(X: np.ndarray, Y: np.ndarray, rng: RngStream | None = None, n_boot: int = 2000, level: float = 0.95) -> CorrelationEstimate:
    """Pearson correlation over all (field, box) cells; bootstrap over fields.

    Boxes whose counts ``Y`` vanish in every field are dropped.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    keep = np.any(Y != 0, axis=0)
    X, Y = X[:, keep], Y[:, keep]
    if X.size == 0:
        raise DegenerateSampleError("all boxes have zero counts")

    def corr(ix):
        x, y = X[ix].ravel(), Y[ix].ravel()
        return float(np.corrcoef(x, y)[0, 1])

    nf = X.shape[0]
    r = corr(np.arange(nf))
    rng = rng or RngStream(0, RESERVED_STREAM_BASE + 2)
    gen = rng.generator()
    boots = np.array([corr(gen.integers(0, nf, nf)) for _ in range(n_boot)])
    boots = boots[np.isfinite(boots)]
    a = (1 - level) / 2
    return CorrelationEstimate(r, (float(np.quantile(boots, a)), float(np.quantile(boots, 1 - a))), nf, int(keep.sum()))


def box_partition(D: Rectangle, delta: float, n: int) -> list[Rectangle]:
    """n x n boxes tiling the delta-interior of a rectangle."""
    x0, y0, x1, y1 = D.x0 + delta, D.y0 + delta, D.x1 - delta, D.y1 - delta
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    return [Rectangle(xs[i], ys[j], xs[i + 1], ys[j + 1]) for i in range(n) for j in range(n)]


def _box_index(pos: np.ndarray, boxes: Sequence[Rectangle]) -> np.ndarray:
    # half-open assignment so that a partition covers its interior edges
    idx = np.full(len(pos), -1)
    for k, b in enumerate(boxes):
        inside = (pos[:, 0] >= b.x0) & (pos[:, 0] < b.x1) & (pos[:, 1] >= b.y0) & (pos[:, 1] < b.y1)
        idx[inside & (idx < 0)] = k
    return idx


def box_statistics(h: Field, boxes: Sequence[Rectangle], cut: float = -2.0, r_N: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-box lattice-cLQG mass and count of r_N-local maxima with h - m_N > cut."""
    from .extremes import default_r_N

    z = zeta_measure(h)
    bi = _box_index(z.positions, boxes)
    mass = np.bincount(bi[bi >= 0], weights=z.weights[bi >= 0], minlength=len(boxes))
    r_N = default_r_N(h.N) if r_N is None else r_N
    lm = local_max_indices(h, r_N)
    high = lm[h.values[lm] - m_of(h.N) > cut]
    bj = _box_index(h.domain.positions()[high], boxes)
    count = np.bincount(bj[bj >= 0], minlength=len(boxes)).astype(float)
    return mass, count


def intensity_correlation(fields: Sequence[Field], delta: float, boxes, cut: float = -2.0, r_N: float | None = None, rng=None, n_boot: int = 2000, min_fields: int = 100) -> CorrelationEstimate:
    if len(fields) < min_fields:
        raise InsufficientDataError(f"need at least {min_fields} fields, got {len(fields)}")
    if isinstance(boxes, int):
        boxes = box_partition(fields[0].domain.parent, delta, boxes)
    stats = [box_statistics(h, boxes, cut, r_N) for h in fields]
    X = np.array([s[0] for s in stats])
    Y = np.array([s[1] for s in stats])
    return pooled_correlation(X, Y, rng, n_boot)
