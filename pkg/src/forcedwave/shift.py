"""Shifting-habitat heterogeneity ``alpha`` and its envelope bookkeeping.

Every profile is negative and bounded, decays to 0 at -infinity no slower
than ``C*exp(rho*z)`` for ``z <= -K`` and is below -1 for ``z >= K``.
Profiles carry a translation offset ``M``: evaluating at ``z`` returns the
base profile at ``z - M``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit

FAMILIES = ("sigmoid", "bump", "tabulated")
ENVELOPE_TOL = 1e-12


@dataclass(frozen=True)
class ShiftProfile:
    family: str
    m: float
    rho: float
    K: float
    C: float
    M: float = 0.0
    bump_amplitude: float = 0.0
    bump_center: float = 0.0
    bump_width: float = 1.0
    table_z: Optional[tuple] = None
    table_alpha: Optional[tuple] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown shift family {self.family!r}")
        for name in ("rho", "K", "C"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.M < 0:
            raise ValueError("translation offset M must be >= 0")

    @classmethod
    def sigmoid(cls, m: float = 2.0, rho: float = 1.0, K: Optional[float] = None) -> "ShiftProfile":
        """Logistic profile ``-m / (1 + exp(-rho z))``, which has ``C = m``."""
        if K is None:
            # alpha(K) = -(1 + m)/2, halfway between -1 and -m
            K = math.log((m + 1.0) / (m - 1.0)) / rho if m > 1 else 1.0 / rho
        return cls("sigmoid", m=m, rho=rho, K=K, C=m)

    @classmethod
    def bump(
        cls,
        m: float = 2.0,
        rho: float = 1.0,
        amplitude: float = 0.5,
        center: float = -5.0,
        width: float = 1.0,
        K: Optional[float] = None,
    ) -> "ShiftProfile":
        """Logistic profile minus a Gaussian dip ``amplitude*exp(-((z-center)/width)**2)``.

        A negative amplitude gives a bump instead of a dip.
        """
        base = cls.sigmoid(m, rho, K)
        C = m + max(amplitude, 0.0) * math.exp(rho * abs(center) + rho**2 * width**2 / 4.0)
        return cls(
            "bump", m=m, rho=rho, K=base.K, C=C,
            bump_amplitude=amplitude, bump_center=center, bump_width=width,
        )

    @classmethod
    def tabulated(cls, z, alpha, rho: float, K: float, C: float) -> "ShiftProfile":
        z = np.asarray(z, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        if z.ndim != 1 or z.shape != alpha.shape or z.size < 4:
            raise ValueError("tabulated profile needs two equal-length columns with at least 4 rows")
        if np.any(np.diff(z) <= 0):
            raise ValueError("tabulated z must be strictly increasing")
        return cls(
            "tabulated", m=float(-alpha.min()), rho=rho, K=K, C=C,
            table_z=tuple(z.tolist()), table_alpha=tuple(alpha.tolist()),
        )

    def base(self, y):
        """The untranslated profile."""
        y = np.asarray(y, dtype=float)
        if self.family == "tabulated":
            return np.interp(y, self.table_z, self.table_alpha)
        out = -self.m * expit(self.rho * y)
        if self.family == "bump":
            out = out - self.bump_amplitude * np.exp(-(((y - self.bump_center) / self.bump_width) ** 2))
        return out

    def __call__(self, z):
        return self.base(np.asarray(z, dtype=float) - self.M)

    def translated(self, M: float) -> "ShiftProfile":
        return replace(self, M=float(M))

    def as_dict(self) -> dict:
        out = {
            "family": self.family, "m": self.m, "rho": self.rho, "K": self.K,
            "C": self.C, "M": self.M,
        }
        if self.family == "bump":
            out.update(
                bump_amplitude=self.bump_amplitude,
                bump_center=self.bump_center,
                bump_width=self.bump_width,
            )
        return out


def alpha_eval(profile: ShiftProfile, z):
    return profile(z)


def load_table(path, rho: float, K: float, C: float) -> ShiftProfile:
    """Read a two-column ``z alpha`` text file (whitespace or comma separated)."""
    text = Path(path).read_text()
    delimiter = "," if "," in text.splitlines()[0] else None
    data = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected 2 columns, found {data.shape[1]}")
    return ShiftProfile.tabulated(data[:, 0], data[:, 1], rho=rho, K=K, C=C)


def translation_for(profile: ShiftProfile, epsilon: float) -> float:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    return max(profile.K, math.log(profile.C / epsilon) / profile.rho)


def normalize_translation(profile: ShiftProfile, epsilon: float) -> ShiftProfile:
    """Translate so that ``alpha(z) >= -epsilon*exp(rho z)`` for every ``z < 0``.

    Uses ``M = max(K, ln(C/epsilon)/rho)``; ``C <= epsilon`` gives ``M = K``.
    """
    return profile.translated(translation_for(profile, epsilon))


@dataclass
class EnvelopeReport:
    margins: dict
    worst_at: dict
    n_points: int

    @property
    def passed(self) -> bool:
        return all(m >= -ENVELOPE_TOL for m in self.margins.values())

    @property
    def failures(self) -> list:
        return [k for k, m in self.margins.items() if m < -ENVELOPE_TOL]


def default_envelope_grid(profile: ShiftProfile, n: int = 10_000) -> np.ndarray:
    if profile.family == "tabulated":
        return np.asarray(profile.table_z) + profile.M
    span = 10.0 * profile.K
    lo = min(-span, profile.M - span)
    hi = max(span, profile.M + span)
    return np.linspace(lo, hi, n)


def verify_envelope(profile: ShiftProfile, grid=None, epsilon: Optional[float] = None) -> EnvelopeReport:
    """Worst-case margins of each envelope condition on sample points.

    Margins are signed so that a condition holds where its margin is >= 0:
    ``negative`` (alpha < 0), ``lower_envelope`` (alpha >= -C e^{rho y} for
    y <= -K), ``below_minus_one`` (alpha < -1 for y >= K), ``bounded``, and,
    when ``epsilon`` is given, ``translated_envelope`` (alpha >= -eps e^{rho z}
    for z < 0). ``y = z - M`` is the untranslated coordinate.
    """
    z = default_envelope_grid(profile) if grid is None else np.asarray(grid, dtype=float)
    if z.size == 0:
        raise ValueError("grid must be nonempty")
    a = profile(z)
    y = z - profile.M
    margins, worst = {}, {}

    def record(name, values, where):
        if values.size == 0:
            margins[name] = math.inf
            worst[name] = None
            return
        i = int(np.argmin(values))
        margins[name] = float(values[i])
        worst[name] = float(where[i])

    record("negative", -a, z)
    left = y <= -profile.K
    record("lower_envelope", a[left] + profile.C * np.exp(profile.rho * y[left]), z[left])
    right = y >= profile.K
    record("below_minus_one", -1.0 - a[right], z[right])
    margins["bounded"] = 0.0 if np.all(np.isfinite(a)) else -math.inf
    worst["bounded"] = None
    if epsilon is not None:
        neg = z < 0
        record("translated_envelope", a[neg] + epsilon * np.exp(profile.rho * z[neg]), z[neg])
    return EnvelopeReport(margins=margins, worst_at=worst, n_points=int(z.size))
