"""Constants of the planar lattice Green function.

``g`` and ``c0`` enter the expansions of the diagonal Green function and of
the potential kernel; ``alpha`` is the critical exponent and ``c_star`` the
normalization of the Rayleigh factor in the near-extremal limit.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import mpmath


@dataclass(frozen=True)
class Constants:
    g: float
    c0: float
    alpha: float
    c_star: float

    @classmethod
    def compute(cls, dps: int = 40) -> "Constants":
        with mpmath.workdps(dps):
            g = 2 / mpmath.pi
            c0 = (2 * mpmath.euler + mpmath.log(8)) / mpmath.pi
            alpha = 2 / mpmath.sqrt(g)
            c_star = mpmath.exp(2 * c0 / g) / (2 * mpmath.sqrt(g))
            return cls(float(g), float(c0), float(alpha), float(c_star))


CONSTANTS = Constants.compute()
G_CONST = CONSTANTS.g
C0 = CONSTANTS.c0
ALPHA = CONSTANTS.alpha
C_STAR = CONSTANTS.c_star
SQRT_G = math.sqrt(G_CONST)
