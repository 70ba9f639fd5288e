import numpy as np
import pytest
from scipy import stats
from scipy.special import lambertw

from dgff.domain import Disc, LatticeDomain, discretize, unit_disc, unit_square
from dgff.extremes import NormingSpec
from dgff.green import ALPHA, C0, G_CONST, DomainError
from dgff.measure import PointMeasure
from dgff.sampler import Field, RngStream, enclosing_rectangle, sample_field, sample_restrict, streams
from dgff.sampler.rng import RESERVED_STREAM_BASE
from dgff.verify import (
    DegenerateSampleError,
    InsufficientDataError,
    box_partition,
    check_tail_grid,
    fit_max_tail,
    gm_check,
    green_asymptotics_report,
    intensity_correlation,
    max_tail,
    norming_ratio,
    norming_ratio_from_masses,
    pooled_correlation,
    rayleigh_calibration,
    rayleigh_gof,
    truncated_rayleigh_cdf,
    weighted_ks,
    zt_mean_test,
)


# --- Rayleigh ---------------------------------------------------------------


def test_rayleigh_median_anchor():
    med = np.sqrt(2 * G_CONST * np.log(2))
    assert med == pytest.approx(0.93944, abs=1e-5)
    assert truncated_rayleigh_cdf(med, np.inf) == pytest.approx(0.5, abs=1e-15)


def test_weighted_ks_matches_scipy_for_unit_weights():
    x = RngStream(0, 0).uniform(500)
    d = weighted_ks(x, np.ones(500), lambda t: np.clip(t, 0, 1))
    assert d == pytest.approx(stats.kstest(x, "uniform").statistic, abs=1e-14)


def _synthetic(depths, weights=None):
    n = len(depths)
    w = np.ones(n) if weights is None else weights
    return PointMeasure(np.full((n, 2), 0.5), w, depths, None, unit_square())


def test_rayleigh_synthetic_pass_and_power():
    reps = rayleigh_calibration(runs=20, n=1000, master_seed=3, n_calib=200)
    assert sum(r.passed for r in reps) >= 18
    u = RngStream(4, 0).uniform(1000) * 3
    bad = rayleigh_gof([_synthetic(u)], n_calib=200)
    assert not bad.passed


def test_rayleigh_window_and_degenerate():
    z = _synthetic(np.array([5.0, 6.0]))  # every atom deeper than t_max
    with pytest.raises(DegenerateSampleError):
        rayleigh_gof([z])
    # atoms outside D^delta are ignored
    far = PointMeasure(np.array([[0.01, 0.5]]), [1.0], [1.0], None, unit_square())
    with pytest.raises(DegenerateSampleError):
        rayleigh_gof([far], delta=0.1)


# --- norming ratio ----------------------------------------------------------


def _fields(n, N=24, seed=0):
    L = discretize(unit_square(), N)
    h = sample_field(L, streams(seed, range(n)))
    return [Field(L, v) for v in h]


def test_norming_ratio_identities():
    fs = _fields(30)
    one, ident = NormingSpec("one"), NormingSpec("identity")
    same = norming_ratio(fs, one, one)
    assert np.all(same.ratios == 1.0) and same.predicted == 1.0
    two = norming_ratio(fs, NormingSpec("identity", scale=2.0), ident)
    assert np.allclose(two.ratios, 2.0, rtol=1e-14, atol=0)
    dm = norming_ratio(fs, ident, one)
    assert dm.predicted == pytest.approx(1.0, abs=1e-8)
    assert dm.ci[0] <= dm.median <= dm.ci[1]
    with pytest.raises(InsufficientDataError):
        norming_ratio(fs[:10], one, one)


def test_norming_ratio_zero_denominator_flagged():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    b = np.array([1.0, 0.0, 1.0, 2.0])
    r = norming_ratio_from_masses(a, b, NormingSpec("one"), NormingSpec("one"))
    assert r.excluded == 1
    assert r.ratios.tolist() == [1.0, 3.0, 2.0]


# --- maximum tail -----------------------------------------------------------


def _synthetic_maxima(n, seed, u0=0.5):
    c = np.exp(ALPHA * u0) / u0  # S(u0) = 1
    U = RngStream(seed, 0).uniform(n)
    return -np.real(lambertw(-ALPHA * U / c, -1)) / ALPHA


def test_tail_synthetic_oracle():
    u = np.linspace(1.0, 2.5, 16)
    hits = 0
    for seed in range(10):
        f = fit_max_tail(_synthetic_maxima(10_000, seed), u)
        hits += abs(f.slope + ALPHA) <= 2 * f.slope_se
    assert hits >= 8


def test_tail_se_scaling():
    u = np.linspace(1.0, 2.5, 16)
    a = fit_max_tail(_synthetic_maxima(10_000, 1), u)
    b = fit_max_tail(_synthetic_maxima(20_000, 2), u)
    assert 1.2 < a.slope_se / b.slope_se < 1.7


def test_tail_errors():
    u = np.linspace(1.0, 2.5, 16)
    with pytest.raises(InsufficientDataError):
        fit_max_tail(np.full(2000, 0.3), u)
    with pytest.raises(ValueError):
        fit_max_tail(np.zeros(10), u[::-1])
    with pytest.raises(ValueError):
        check_tail_grid(u, 256)  # sqrt(log 256) = 2.355 < 2.5
    check_tail_grid(np.linspace(1, 2.3, 5), 256)
    with pytest.raises(InsufficientDataError):
        max_tail(_fields(20, N=16), np.linspace(1, 1.6, 4))


# --- Gibbs-Markov -------------------------------------------------------------


def test_gm_check_detects_perturbation():
    U = discretize(unit_disc(), 10)
    V = enclosing_rectangle(U, 3)
    dec = sample_restrict(sample_field(V, RngStream(0, 0)), U)
    assert gm_check(dec).passed
    dec.binding.values[5] += 1e-6
    assert not gm_check(dec).passed
    R = LatticeDomain.rectangle(5, 5)
    same = sample_restrict(sample_field(R, RngStream(0, 1)), R)
    assert gm_check(same).value == 0.0


# --- Green asymptotics ------------------------------------------------------


def test_green_asymptotics_report_and_defect():
    ok = green_asymptotics_report(unit_square(), (0.5, 0.5), [64, 128, 256])
    assert ok.decreasing and ok.passed
    bad = green_asymptotics_report(unit_square(), (0.5, 0.5), [64, 128, 256], c0=1.0, threshold=0.02)
    assert not bad.passed
    assert bad.residual[-1] == pytest.approx(C0 - 1.0, abs=0.006)
    with pytest.raises(DomainError):
        green_asymptotics_report(unit_square(), (0.05, 0.5), [64])


# --- Z_t ----------------------------------------------------------------------


def test_zt_targets():
    D = unit_disc()
    a = zt_mean_test(D, Disc(0, 0, 0.5), 1.0, 20, resolution=16)
    b = zt_mean_test(D, Disc(0, 0, 0.5), 0.01, 20, resolution=16)
    assert a.details["target"] == pytest.approx(ALPHA * 37 * np.pi / 192, rel=1e-10)
    assert a.details["target"] / b.details["target"] == pytest.approx(10.0, rel=1e-12)
    empty = zt_mean_test(D, None, 1.0, 20, resolution=16)
    assert empty.details["mean"] == 0.0 and empty.details["target"] == 0.0 and empty.passed


# --- intensity correlation ------------------------------------------------


def test_pooled_correlation_oracles():
    X = RngStream(0, 0).uniform((60, 16))
    assert pooled_correlation(X, X, n_boot=200).r == pytest.approx(1.0, abs=1e-12)
    Y = RngStream(0, 1).uniform((60, 16))
    ce = pooled_correlation(X, Y, n_boot=500)
    assert ce.ci[0] < 0 < ce.ci[1]
    Y[:, 3] = 0
    assert pooled_correlation(X, Y, n_boot=50).n_boxes == 15
    with pytest.raises(DegenerateSampleError):
        pooled_correlation(X, np.zeros_like(X))


def test_box_partition_tiles_interior():
    boxes = box_partition(unit_square(), 0.1, 4)
    assert len(boxes) == 16
    assert sum(b.area for b in boxes) == pytest.approx(0.64)


def test_intensity_correlation_needs_fields():
    with pytest.raises(InsufficientDataError):
        intensity_correlation(_fields(5), 0.1, 4)
