"""Weighted atomic measures on a domain (optionally with a depth coordinate)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class PointMeasure:
    """Atoms ``(positions[k], depths[k])`` carrying ``weights[k]``.

    ``depths`` is None for purely spatial measures.
    """

    positions: np.ndarray
    weights: np.ndarray
    depths: np.ndarray | None = None
    N: int | None = None
    domain: object = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.depths is not None:
            self.depths = np.asarray(self.depths, dtype=float)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def restrict(self, mask: np.ndarray) -> "PointMeasure":
        d = None if self.depths is None else self.depths[mask]
        return PointMeasure(self.positions[mask], self.weights[mask], d, self.N, self.domain)

    def spatial(self) -> "PointMeasure":
        return PointMeasure(self.positions, self.weights, None, self.N, self.domain)

    def mass_in(self, predicate) -> float:
        """Total weight of atoms whose position satisfies ``predicate``."""
        if len(self) == 0:
            return 0.0
        return float(self.weights[predicate(self.positions)].sum())

    def compress(self, rel_tol: float) -> "PointMeasure":
        """Drop the lightest atoms whose combined weight is at most ``rel_tol`` of the total.

        Any statistic of the normalized measure moves by at most ``rel_tol``
        in total variation.  Surviving atoms keep their original order.
        """
        if len(self) == 0 or rel_tol <= 0:
            return self
        order = np.argsort(self.weights, kind="stable")
        csum = np.cumsum(self.weights[order])
        ndrop = int(np.searchsorted(csum, rel_tol * csum[-1], side="right"))
        keep = np.ones(len(self), dtype=bool)
        keep[order[:ndrop]] = False
        return self.restrict(keep)
