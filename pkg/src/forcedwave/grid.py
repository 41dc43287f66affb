"""Uniform truncation grids and the matching central-difference operators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

MIN_POINTS = 401
DEFAULT_POINTS = 8001
TAIL_EFOLDS = 25.0


@dataclass(frozen=True)
class Grid:
    """``n`` equispaced points on ``[center - L, center + L]``."""

    L: float
    n: int = DEFAULT_POINTS
    center: float = 0.0

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"half-width L must be positive, got {self.L!r}")
        if self.n < MIN_POINTS:
            raise ValueError(f"need at least {MIN_POINTS} points, got {self.n}")

    @property
    def z(self) -> np.ndarray:
        return np.linspace(self.center - self.L, self.center + self.L, self.n)

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    def refined(self) -> "Grid":
        """Same interval with half the spacing."""
        return Grid(self.L, 2 * self.n - 1, self.center)

    def as_dict(self) -> dict:
        return {"L": self.L, "n": self.n, "center": self.center, "h": self.h}


def default_grid(lam_min: float, K: float = 0.0, M: float = 0.0, n: int = DEFAULT_POINTS) -> Grid:
    """``L = max(25/lam_min, 10K + 10, M + K + 10)``.

    The last term keeps the translated transition zone (around ``z = M``)
    well inside the domain.
    """
    if not lam_min > 0:
        raise ValueError("lam_min must be positive")
    L = max(TAIL_EFOLDS / lam_min, 10.0 * K + 10.0, M + K + 10.0)
    return Grid(L, n)


def transport_matrix(n_interior: int, h: float, d: float, s: float) -> sp.csc_matrix:
    """Central differences of ``d u'' - s u'`` on interior nodes (Dirichlet ends dropped)."""
    lo = d / h**2 + s / (2.0 * h)
    hi = d / h**2 - s / (2.0 * h)
    return sp.diags(
        [np.full(n_interior - 1, lo), np.full(n_interior, -2.0 * d / h**2), np.full(n_interior - 1, hi)],
        [-1, 0, 1],
        format="csc",
    )


def apply_transport(u: np.ndarray, h: float, d: float, s: float) -> np.ndarray:
    """``d u'' - s u'`` at the interior nodes of a full nodal vector."""
    return d * (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2 - s * (u[2:] - u[:-2]) / (2.0 * h)
