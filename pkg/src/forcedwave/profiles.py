"""Piecewise closed-form profiles with exact derivatives.

Each piece is a sum of terms ``coef * (-z)**power * exp(rate*z)`` with
``power`` in {0, 1/2, 1}.  That basis covers constants, ``e^{lz}``,
``z e^{lz}`` (``coef`` negated) and ``sqrt(|z|) e^{lz}``.  Terms with a
positive power are only ever placed on pieces that lie in ``z < 0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BreakpointDerivative

POWERS = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class Term:
    coef: float
    power: float = 0.0
    rate: float = 0.0

    def __post_init__(self):
        if self.power not in POWERS:
            raise ValueError(f"power must be one of {POWERS}, got {self.power}")

    def __call__(self, z, order: int = 0, scale: float = 0.0):
        """Value or derivative, multiplied by ``exp(-scale*z)``."""
        z = np.asarray(z, dtype=float)
        c, b, lam = self.coef, self.power, self.rate
        ex = c * np.exp((lam - scale) * z)
        if b == 0.0:
            return ex * lam**order
        y = -z
        if order == 0:
            return ex * y**b
        if order == 1:
            return ex * (lam * y**b - b * y ** (b - 1.0))
        if order == 2:
            out = lam * lam * y**b - 2.0 * lam * b * y ** (b - 1.0)
            if b != 1.0:
                out = out + b * (b - 1.0) * y ** (b - 2.0)
            return ex * out
        raise ValueError("order must be 0, 1 or 2")


def const(c: float) -> tuple:
    return (Term(c),) if c != 0 else ()


class PiecewiseProfile:
    """Continuous function made of closed-form pieces between breakpoints.

    ``pieces[i]`` is active on ``[breakpoints[i-1], breakpoints[i])`` with the
    obvious conventions at both ends.  Values at a breakpoint come from the
    right piece; derivatives there need ``side='left'`` or ``side='right'``.
    """

    closed_form = True

    def __init__(self, breakpoints: Sequence[float], pieces: Sequence[Sequence[Term]], name: str = ""):
        self.breakpoints = tuple(float(b) for b in breakpoints)
        self.pieces = tuple(tuple(p) for p in pieces)
        self.name = name
        if len(self.pieces) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more piece than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    def __repr__(self):
        return f"PiecewiseProfile({self.name!r}, breakpoints={self.breakpoints})"

    def _piece_index(self, z, side):
        bp = np.asarray(self.breakpoints)
        return np.searchsorted(bp, z, side="left" if side == "left" else "right")

    def eval(self, z, order: int = 0, side: Optional[str] = None, scale: float = 0.0):
        scalar = np.ndim(z) == 0
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if order >= 1 and side is None and self.breakpoints and np.isin(z, self.breakpoints).any():
            raise BreakpointDerivative(f"{self.name}: derivative requested at a breakpoint")
        idx = self._piece_index(z, side)
        out = np.zeros_like(z)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if not piece or not mask.any():
                continue
            zi = z[mask]
            out[mask] = sum(t(zi, order, scale) for t in piece)
        return out[0] if scalar else out

    __call__ = eval

    def one_sided(self, z: float, order: int = 1) -> tuple:
        return (
            float(self.eval(z, order, side="left")),
            float(self.eval(z, order, side="right")),
        )

    def continuity_gaps(self) -> list:
        return [abs(a - b) for a, b in (self.one_sided(z, 0) for z in self.breakpoints)]

    def left_constant(self) -> float:
        """Constant part of the leftmost piece, i.e. the limit at -infinity."""
        return float(sum(t.coef for t in self.pieces[0] if t.rate == 0.0 and t.power == 0.0))

    def left_decays(self) -> bool:
        return all(t.rate > 0 for t in self.pieces[0] if not (t.rate == 0.0 and t.power == 0.0))

    def left_scale_rate(self) -> float:
        """Slowest rate of the leftmost piece when it vanishes at -infinity, else 0."""
        terms = self.pieces[0]
        if not terms or any(t.rate == 0.0 for t in terms):
            return 0.0
        return min(t.rate for t in terms)

    def interior_points(self, lo: float, hi: float, n: int, rng) -> np.ndarray:
        """Random points on piece interiors inside ``[lo, hi]`` (for derivative checks)."""
        z = rng.uniform(lo, hi, size=4 * n)
        bp = np.asarray(self.breakpoints)
        if bp.size:
            dist = np.min(np.abs(z[:, None] - bp[None, :]), axis=1)
            z = z[dist > 1e-3]
        return z[:n]


class NumericProfile:
    """Grid-sampled profile.

    Values off the grid and derivatives anywhere use a cubic spline, whose
    first/second derivative errors are O(h**3)/O(h**2) times the size of the
    fourth derivative.  At interior grid nodes the derivatives come from the
    same central differences the solvers use, so a discrete solution has a
    discrete residual equal to its solver residual.
    """

    closed_form = False
    breakpoints = ()

    def __init__(self, z, values, name: str = ""):
        self.z = np.asarray(z, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.name = name
        self._spline = CubicSpline(self.z, self.values)
        h = np.diff(self.z)
        self.h = float((self.z[-1] - self.z[0]) / (self.z.size - 1))
        self.uniform = bool(np.allclose(h, self.h, rtol=1e-9, atol=0))

    def __repr__(self):
        return f"NumericProfile({self.name!r}, n={self.z.size})"

    def _nodal(self, z):
        if not self.uniform:
            return None
        pos = (z - self.z[0]) / self.h
        idx = np.rint(pos).astype(int)
        ok = (np.abs(pos - idx) < 1e-6) & (idx >= 1) & (idx <= self.z.size - 2)
        return idx if ok.all() else None

    def eval(self, z, order: int = 0, side: Optional[str] = None, scale: float = 0.0):
        scalar = np.ndim(z) == 0
        z = np.atleast_1d(np.asarray(z, dtype=float))
        idx = self._nodal(z) if order > 0 else None
        if idx is not None:
            f, h = self.values, self.h
            if order == 1:
                out = (f[idx + 1] - f[idx - 1]) / (2 * h)
            else:
                out = (f[idx + 1] - 2 * f[idx] + f[idx - 1]) / (h * h)
        else:
            out = self._spline(z, order)
        return out[0] if scalar else out

    __call__ = eval

    def left_constant(self) -> float:
        return float(self.values[0])

    def left_decays(self) -> bool:
        return True

    def left_scale_rate(self) -> float:
        return 0.0


def eval_profile(profile, z, order: int = 0, side: Optional[str] = None):
    return profile.eval(z, order, side=side)
