"""Continuum side: the smoothed field h_t and the measures Z_t.

On the unit disc E[Z_t(A)] = alpha sqrt(t) int_A r^D(x)^2 dx; for the disc
of radius 1/2 at t = 1 this is about 1.5175.
"""
import numpy as np

from dgff.domain import Disc, unit_disc
from dgff.sampler import RngStream, build_Zt, sample_ht
from dgff import verify as V

D = unit_disc()
ht = sample_ht(D, 64, 1.0, RngStream(5, 0))
print("h_1 on a", ht.values.shape, "grid; variance of the sample", np.var(ht.values))

Z = build_Zt(ht)
print("Z_1(D) for this draw:", Z.weights.sum())

A = Disc(0.0, 0.0, 0.5)
target = V.integral_r2(D, A) * np.sqrt(2 * np.pi)
print("target", target)
rep = V.zt_mean_test(D, A, 1.0, 2000, master_seed=3, resolution=64)
print(f"mean {rep.details['mean']:.4f} +- {rep.details['se']:.4f}  |z| = {rep.value:.2f}")
