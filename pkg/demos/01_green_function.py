"""Lattice Green functions and the potential kernel.

Walks through the discretized unit square D_N, the exact potential kernel,
and the growth G^{D_N}(x, x) = g log N + c0 + g log r^D(x) + o(1).
"""
import numpy as np

from dgff.domain import discretize, unit_disc, unit_square
from dgff.green import C0, G_CONST, conformal_radius, exact_value, green_dense, green_via_boundary, potential_kernel

# D_N keeps the vertices x with x/N at sup-distance > 1/N from the complement
L = discretize(unit_square(), 8)
print("D_8 of the unit square:", L.size, "vertices, bbox", L.bbox)

# The kernel near the origin is exactly p + q/pi with rational p, q
for x in [(1, 0), (1, 1), (2, 0), (2, 1), (3, 3)]:
    p, q = exact_value(*x)
    print(f"a{x} = {p} + ({q})/pi = {potential_kernel(x):.15f}")

# far away it grows like g log|x| + c0
x = np.array([500, 123])
print("a(500,123) =", potential_kernel(x), " g log|x| + c0 =", G_CONST * np.log(np.hypot(*x)) + C0)

# dense inverse of I - P versus the boundary representation sum_z H(x, z) a(x - z)
G = green_dense(L)
v = L.vertices[L.size // 2]
print("G(x, x) at", tuple(int(c) for c in v), ": dense", G.diag[L.size // 2], " boundary", green_via_boundary(L, v))

# the residual of the log-growth at the centre shrinks with N
r = conformal_radius(unit_square(), (0.5, 0.5))
print("conformal radius of the square at its centre:", r)
for N in (32, 64, 128):
    L = discretize(unit_square(), N)
    c = (N // 2, N // 2)
    res = green_via_boundary(L, c) - G_CONST * np.log(N) - C0 - G_CONST * np.log(r)
    print(f"N={N:4d}  residual {res:+.5f}")

# on the disc r^D(x) = 1 - |x|^2 in closed form
print("r^disc(0.5, 0) =", conformal_radius(unit_disc(), (0.5, 0.0)))
