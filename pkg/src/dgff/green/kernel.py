"""Potential kernel of simple random walk on Z^2.

The kernel ``a`` vanishes at the origin, equals 1 at the four neighbours and
is discrete harmonic elsewhere.  Inside the box ``|x|_inf <= R_EXACT`` values
are generated exactly: every a(x) has the form p + q/pi with rational p, q,
seeded by the diagonal closed form

    a(n, n) = (4/pi) * sum_{k=1}^{n} 1/(2k - 1)

and propagated off the diagonal by the mean-value relation, one diagonal
band at a time.  The rationals grow to ~100 digits, so the float value is
evaluated with mpmath at a precision matched to their size.  Outside the box
the asymptotic expansion

    a(x) = g log|x| + c0 - cos(4 theta) / (6 pi |x|^2) + O(|x|^-4)

is used; at |x| > 128 the neglected term is far below 1e-8.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np

from .constants import C0, G_CONST

R_EXACT = 128


@lru_cache(maxsize=4)
def exact_table(R: int = R_EXACT) -> dict[tuple[int, int], tuple[Fraction, Fraction]]:
    """Exact (p, q) with a(x, y) = p + q/pi for 0 <= y <= x <= R."""
    A: dict[tuple[int, int], tuple[Fraction, Fraction]] = {(0, 0): (Fraction(0), Fraction(0))}

    def get(x, y):
        x, y = abs(x), abs(y)
        if y > x:
            x, y = y, x
        return A[(x, y)]

    s = Fraction(0)
    for n in range(1, R + 1):
        s += Fraction(1, 2 * n - 1)
        A[(n, n)] = (Fraction(0), 4 * s)
    A[(1, 0)] = (Fraction(1), Fraction(0))
    # harmonicity at (n, n): 4a(n,n) = 2a(n+1,n) + 2a(n,n-1)
    for n in range(1, R):
        d, e = A[(n, n)], A[(n, n - 1)]
        A[(n + 1, n)] = (2 * d[0] - e[0], 2 * d[1] - e[1])
    # harmonicity at (x, y) on band d = x - y gives a(x+1, y) on band d+1
    for d in range(1, R):
        for y in range(0, R - d):
            x = y + d
            c = get(x, y)
            t1, t2, t3 = get(x - 1, y), get(x, y + 1), get(x, y - 1)
            A[(x + 1, y)] = (4 * c[0] - t1[0] - t2[0] - t3[0], 4 * c[1] - t1[1] - t2[1] - t3[1])
    return A


def exact_value(x: int, y: int) -> tuple[Fraction, Fraction]:
    """(p, q) with a(x, y) = p + q/pi; requires max(|x|, |y|) <= R_EXACT."""
    x, y = abs(int(x)), abs(int(y))
    if y > x:
        x, y = y, x
    if x > R_EXACT:
        raise ValueError(f"exact potential kernel only available for |x|_inf <= {R_EXACT}")
    return exact_table()[(x, y)]


@lru_cache(maxsize=1)
def _float_table() -> np.ndarray:
    A = exact_table()
    out = np.zeros((R_EXACT + 1, R_EXACT + 1))
    for (x, y), (p, q) in A.items():
        digits = max(len(str(abs(p.numerator))), len(str(abs(q.numerator))), 1)
        with mpmath.workdps(digits + 30):
            v = mpmath.mpf(p.numerator) / p.denominator + mpmath.mpf(q.numerator) / q.denominator / mpmath.pi
        out[x, y] = out[y, x] = float(v)
    return out


def potential_kernel_asymptotic(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    theta = np.arctan2(x[..., 1], x[..., 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        return 0.5 * G_CONST * np.log(r2) + C0 - np.cos(4 * theta) / (6 * np.pi * r2)


def potential_kernel(x) -> np.ndarray | float:
    """a(x) for integer points; accepts a single pair or an array (..., 2)."""
    xi = np.asarray(x, dtype=np.int64)
    scalar = xi.shape == (2,)
    xi = xi.reshape(-1, 2)
    ax, ay = np.abs(xi[:, 0]), np.abs(xi[:, 1])
    near = np.maximum(ax, ay) <= R_EXACT
    out = np.empty(len(xi))
    tab = _float_table()
    out[near] = tab[ax[near], ay[near]]
    if not near.all():
        out[~near] = potential_kernel_asymptotic(xi[~near])
    out = out.reshape(np.asarray(x).shape[:-1])
    return float(out) if scalar else out
