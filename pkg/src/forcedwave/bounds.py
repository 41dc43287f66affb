"""Upper/lower bound pairs for the wave system and their automated verification.

A pair ``(upper, lower)`` of profile triples must satisfy, away from a
finite set of kinks,

    U_i = d*U'' - s*U' + r_i*U*[...] <= 0     (upper profiles)
    L_i = d*L'' - s*L' + r_i*L*[...] >= 0     (lower profiles)

where each bracket uses the *opposite* bound of the competing species:
the weak prey's upper residual sees the strong prey and predator lower
bounds, and so on.  The predator residuals use the prey bounds of the same
side.  On top of that: lower <= upper pointwise, and at each kink the
upper profile may only bend down and the lower profile only up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import GridTouchesBreakpoint, HypothesisViolation, SpeedRegimeMismatch
from .model import (
    ModelParams,
    SPEED_RTOL,
    characteristic_roots,
    check_hypotheses,
    critical_speeds,
    steady_states,
)
from .profiles import PiecewiseProfile, Term, const
from .shift import ShiftProfile, normalize_translation

BOUND_SCENARIOS = ("Eu-super", "Eu-critical", "Estar-super", "Estar-critical")
AMPLITUDE_SLACK = 1.05
INEQUALITIES = ("U1", "U2", "U3", "L1", "L2", "L3")


@dataclass
class BoundConstants:
    epsilon: float
    M: float
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    lambda3: Optional[float] = None
    lambda4: Optional[float] = None
    lambda_u: Optional[float] = None
    lambda_star: Optional[float] = None
    mu1: Optional[float] = None
    mu2: Optional[float] = None
    nu1: Optional[float] = None
    q1: Optional[float] = None
    q2: Optional[float] = None
    q3: Optional[float] = None
    q4: Optional[float] = None
    eta1: Optional[float] = None
    eta2: Optional[float] = None
    B0: Optional[float] = None
    B1: Optional[float] = None
    B2: Optional[float] = None
    z1: Optional[float] = None
    z2: Optional[float] = None
    z3: Optional[float] = None
    z4: Optional[float] = None
    z5: Optional[float] = None
    z6: Optional[float] = None
    z_u: Optional[float] = None
    z_star: Optional[float] = None
    #: lower bound each amplitude constant must strictly exceed
    lower_bounds: dict = field(default_factory=dict)

    def amplitudes_admissible(self) -> dict:
        return {name: getattr(self, name) > lb for name, lb in self.lower_bounds.items()}

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class BoundPair:
    upper: tuple
    lower: tuple
    constants: BoundConstants
    scenario: str
    params: ModelParams
    s: float
    shift: ShiftProfile
    invaded: tuple

    @property
    def closed_form(self) -> bool:
        return all(p.closed_form for p in self.upper + self.lower)

    def breakpoints(self) -> list:
        pts = set()
        for p in self.upper + self.lower:
            pts.update(p.breakpoints)
        return sorted(pts)

    def midpoint(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.array([0.5 * (up(z) + lo(z)) for up, lo in zip(self.upper, self.lower)])

    def tail_rate(self) -> float:
        c = self.constants
        for rate in (c.lambda1, c.lambda_u, c.lambda3, c.lambda_star):
            if rate is not None:
                return rate
        raise ValueError("pair has no tail rate")


def _regime_check(params: ModelParams, s: float, scenario: str) -> None:
    cs = critical_speeds(params)
    base, regime = scenario.split("-")
    s_min = max(cs.s2_star, cs.s3_star) if base == "Eu" else cs.s2_dstar
    critical = abs(s - s_min) <= SPEED_RTOL * s_min
    if regime == "super" and (critical or s < s_min):
        raise SpeedRegimeMismatch(
            f"{scenario}: speed {s} must exceed the minimal speed {s_min}; "
            f"use the critical constructor at s == {s_min}"
        )
    if regime == "critical" and not critical:
        raise SpeedRegimeMismatch(f"{scenario}: speed {s} is not the minimal speed {s_min}")


def build_bounds(
    params: ModelParams,
    s: float,
    shift: ShiftProfile,
    scenario: str,
    epsilon: Optional[float] = None,
    overrides: Optional[dict] = None,
) -> BoundPair:
    """Construct one of the four closed-form bound families.

    Amplitude constants default to ``AMPLITUDE_SLACK`` times their lower
    bounds; intermediate decay rates to the midpoint of their admissible
    interval.  ``overrides`` may replace any of ``epsilon, mu1, mu2, nu1,
    q1, q2, q3, q4, eta1, eta2`` (no admissibility check is made, so that
    deliberately broken pairs can be fed to ``verify_pair``).
    """
    if scenario not in BOUND_SCENARIOS:
        raise ValueError(f"unknown bound scenario {scenario!r}; expected one of {BOUND_SCENARIOS}")
    overrides = dict(overrides or {})
    _regime_check(params, s, scenario)
    base = scenario.split("-")[0]
    report = check_hypotheses(params, s, base, rho=shift.rho)
    if not report.passed:
        name = report.first_failure
        raise HypothesisViolation(name, f"{scenario}: {name} fails ({report.details.get(name, '')})")
    eps = overrides.pop("epsilon", None) or epsilon or report.working_epsilon()
    normalized = normalize_translation(shift, eps)
    consts = BoundConstants(epsilon=eps, M=normalized.M)
    builder = {
        "Eu-super": _eu_super,
        "Eu-critical": _eu_critical,
        "Estar-super": _estar_super,
        "Estar-critical": _estar_critical,
    }[scenario]
    upper, lower, invaded = builder(params, s, eps, consts, overrides)
    if overrides:
        raise ValueError(f"unused overrides for {scenario}: {sorted(overrides)}")
    return BoundPair(
        upper=upper, lower=lower, constants=consts, scenario=scenario,
        params=params, s=s, shift=normalized, invaded=invaded,
    )


def _pick(overrides: dict, name: str, default: float) -> float:
    return float(overrides.pop(name)) if name in overrides else default


def _eu_super(p, s, eps, c, ov):
    roots = characteristic_roots(p, s, "A1")
    l1, l2 = roots.small, roots.large
    mid = 0.5 * (l1 + min(l2, 2 * l1))
    c.lambda1, c.lambda2 = l1, l2
    c.mu1 = _pick(ov, "mu1", mid)
    c.mu2 = _pick(ov, "mu2", mid)
    g = 2 * p.a - 1
    c.lower_bounds["q1"] = max(1.0, p.r2 * (eps + 1 + p.b * g) / -roots.poly(c.mu1))
    c.lower_bounds["q2"] = max(g, p.r3 * g * (eps + 3 * p.a - 1) / -roots.poly(c.mu2))
    c.q1 = _pick(ov, "q1", AMPLITUDE_SLACK * c.lower_bounds["q1"])
    c.q2 = _pick(ov, "q2", AMPLITUDE_SLACK * c.lower_bounds["q2"])
    c.z1 = -math.log(c.q1) / (c.mu1 - l1)
    c.z2 = -math.log(c.q2 / g) / (c.mu2 - l1)
    upper = (
        PiecewiseProfile([], [const(1.0)], "upper1"),
        PiecewiseProfile([0.0], [(Term(1.0, 0, l1),), const(1.0)], "upper2"),
        PiecewiseProfile([0.0], [(Term(g, 0, l1),), const(g)], "upper3"),
    )
    lower = (
        PiecewiseProfile([0.0], [(Term(1.0), Term(-1.0, 0, l1)), ()], "lower1"),
        PiecewiseProfile([c.z1], [(Term(1.0, 0, l1), Term(-c.q1, 0, c.mu1)), ()], "lower2"),
        PiecewiseProfile([c.z2], [(Term(g, 0, l1), Term(-c.q2, 0, c.mu2)), ()], "lower3"),
    )
    return upper, lower, (1.0, 0.0, 0.0)


def _critical_amplitude_bound(rate_const, B, d, eps, coupling):
    """``4 r (B/d) [eps (5/2B)^{5/2} + coupling*B*(7/2B)^{7/2}]``."""
    return 4.0 * rate_const * (B / d) * (
        eps * (2.5 / B) ** 2.5 + coupling * B * (3.5 / B) ** 3.5
    )


def _eu_critical(p, s, eps, c, ov):
    lu = critical_speeds(p).lambda_u
    B0 = lu * math.e
    g = 2 * p.a - 1
    c.lambda_u, c.B0, c.z_u = lu, B0, -1.0 / lu
    c.lower_bounds["q3"] = max(
        math.e * math.sqrt(lu),
        _critical_amplitude_bound(p.r2, B0, p.d, eps, 1 + p.b * g),
    )
    c.lower_bounds["q4"] = max(
        g * math.e * math.sqrt(lu),
        _critical_amplitude_bound(p.r3, B0, p.d, eps, p.a + 1),
    )
    c.q3 = _pick(ov, "q3", AMPLITUDE_SLACK * c.lower_bounds["q3"])
    c.q4 = _pick(ov, "q4", AMPLITUDE_SLACK * c.lower_bounds["q4"])
    c.z3 = -((c.q3 / B0) ** 2)
    c.z4 = -((c.q4 / B0) ** 2)
    zu = c.z_u
    # z e^{lz} is written as -(-z) e^{lz}
    upper = (
        PiecewiseProfile([], [const(1.0)], "upper1"),
        PiecewiseProfile([zu], [(Term(B0, 1, lu),), const(1.0)], "upper2"),
        PiecewiseProfile([zu], [(Term(g * B0, 1, lu),), const(g)], "upper3"),
    )
    lower = (
        PiecewiseProfile([zu], [(Term(1.0), Term(-B0, 1, lu)), ()], "lower1"),
        PiecewiseProfile([c.z3], [(Term(B0, 1, lu), Term(-c.q3, 0.5, lu)), ()], "lower2"),
        PiecewiseProfile([c.z4], [(Term(g * B0, 1, lu), Term(-g * c.q4, 0.5, lu)), ()], "lower3"),
    )
    return upper, lower, (1.0, 0.0, 0.0)


def _estar_super(p, s, eps, c, ov):
    st = steady_states(p)
    roots = characteristic_roots(p, s, "A2")
    l3, l4 = roots.small, roots.large
    c.lambda3, c.lambda4 = l3, l4
    c.nu1 = _pick(ov, "nu1", 0.5 * (l3 + min(l4, 2 * l3)))
    g = 2 * p.a - 1
    up, wp = st.u_p, st.w_p
    c.B1 = g - wp
    c.lower_bounds["eta1"] = max(1.0, p.r2 * (eps + 1 + p.b * g) / -roots.poly(c.nu1))
    c.eta1 = _pick(ov, "eta1", AMPLITUDE_SLACK * c.lower_bounds["eta1"])
    c.z5 = -math.log(c.eta1) / (c.nu1 - l3)
    upper = (
        PiecewiseProfile([0.0], [(Term(up), Term(p.b * wp, 0, l3)), const(1.0)], "upper1"),
        PiecewiseProfile([0.0], [(Term(1.0, 0, l3),), const(1.0)], "upper2"),
        PiecewiseProfile([0.0], [(Term(wp), Term(c.B1, 0, l3)), const(g)], "upper3"),
    )
    lower = (
        PiecewiseProfile([0.0], [(Term(up), Term(-up, 0, l3)), ()], "lower1"),
        PiecewiseProfile([c.z5], [(Term(1.0, 0, l3), Term(-c.eta1, 0, c.nu1)), ()], "lower2"),
        PiecewiseProfile([0.0], [(Term(wp), Term(-wp, 0, l3)), ()], "lower3"),
    )
    return upper, lower, (up, 0.0, wp)


def _estar_critical(p, s, eps, c, ov):
    st = steady_states(p)
    ls = critical_speeds(p).lambda_star
    B2 = ls * math.e
    g = 2 * p.a - 1
    up, wp = st.u_p, st.w_p
    c.lambda_star, c.B1, c.B2, c.z_star = ls, g - wp, B2, -1.0 / ls
    c.lower_bounds["eta2"] = max(
        math.e * math.sqrt(ls),
        _critical_amplitude_bound(p.r2, B2, p.d, eps, 1 + p.b * g),
    )
    c.eta2 = _pick(ov, "eta2", AMPLITUDE_SLACK * c.lower_bounds["eta2"])
    c.z6 = -((c.eta2 / B2) ** 2)
    zs = c.z_star
    upper = (
        PiecewiseProfile([zs], [(Term(up), Term(p.b * wp * B2, 1, ls)), const(1.0)], "upper1"),
        PiecewiseProfile([zs], [(Term(B2, 1, ls),), const(1.0)], "upper2"),
        PiecewiseProfile([zs], [(Term(wp), Term(c.B1 * B2, 1, ls)), const(g)], "upper3"),
    )
    lower = (
        PiecewiseProfile([zs], [(Term(up), Term(-up * B2, 1, ls)), ()], "lower1"),
        PiecewiseProfile([c.z6], [(Term(B2, 1, ls), Term(-c.eta2, 0.5, ls)), ()], "lower2"),
        PiecewiseProfile([zs], [(Term(wp), Term(-wp * B2, 1, ls)), ()], "lower3"),
    )
    return upper, lower, (up, 0.0, wp)


# ---------------------------------------------------------------------------
# verification


def verification_grid(
    pair: BoundPair,
    lo: float = -60.0,
    hi: float = 60.0,
    n: int = 12001,
    refine: int = 10,
    radius: float = 1.0,
    exclusion: float = 1e-6,
) -> np.ndarray:
    """Uniform grid, ``refine`` times denser within ``radius`` of each kink.

    Points closer than ``exclusion`` to a kink are dropped.  Pairs built
    from sampled profiles are checked on the interior nodes of their own
    grid instead.
    """
    if not pair.closed_form:
        for prof in pair.lower + pair.upper:
            if not prof.closed_form:
                z = prof.z[1:-1]
                return z[(z >= lo) & (z <= hi)]
    h = (hi - lo) / (n - 1)
    parts = [np.linspace(lo, hi, n)]
    bps = [b for b in pair.breakpoints() if lo - radius <= b <= hi + radius]
    for b in bps:
        m = int(round(2 * radius * refine / h)) + 1
        parts.append(np.linspace(b - radius, b + radius, m))
    z = np.unique(np.concatenate(parts))
    z = z[(z >= lo) & (z <= hi)]
    if pair.breakpoints():
        bp = np.asarray(pair.breakpoints())
        dist = np.min(np.abs(z[:, None] - bp[None, :]), axis=1)
        z = z[dist >= exclusion]
    return z


@dataclass
class ResidualEntry:
    margin: float
    at: float
    passed: bool


@dataclass
class ResidualReport:
    entries: dict
    n_points: int
    exclusion: float
    tol: float
    scaled: bool
    curves: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries.values())

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_points": self.n_points,
            "exclusion": self.exclusion,
            "tol": self.tol,
            "scaled": self.scaled,
            "inequalities": {
                k: {"margin": e.margin, "at": e.at, "passed": e.passed} for k, e in self.entries.items()
            },
        }


def _profile_parts(prof, z, scaled: bool):
    scale = prof.left_scale_rate() if scaled else 0.0
    return (prof.eval(z, 0, scale=scale), prof.eval(z, 1, scale=scale), prof.eval(z, 2, scale=scale))


def residual_curves(pair: BoundPair, shift: ShiftProfile, params: ModelParams, z, scaled: bool = False) -> dict:
    """The six residuals on ``z``.

    With ``scaled=True`` each residual whose own profile vanishes at -infinity
    like ``exp(kappa z)`` is multiplied by ``exp(-kappa z)``; signs are
    unchanged but values far out in the tail no longer underflow.
    """
    p = params
    s = pair.s
    al = shift(z)
    U = [prof.eval(z) for prof in pair.upper]
    L = [prof.eval(z) for prof in pair.lower]
    brackets = {
        "U1": p.r1 * (1 + al - U[0] - p.k * L[1] - p.b * L[2]),
        "U2": p.r2 * (1 + al - p.h * L[0] - U[1] - p.b * L[2]),
        "U3": p.r3 * (-1 + al + p.a * U[0] + p.a * U[1] - U[2]),
        "L1": p.r1 * (1 + al - L[0] - p.k * U[1] - p.b * U[2]),
        "L2": p.r2 * (1 + al - p.h * U[0] - L[1] - p.b * U[2]),
        "L3": p.r3 * (-1 + al + p.a * L[0] + p.a * L[1] - L[2]),
    }
    out = {}
    for name, bracket in brackets.items():
        prof = (pair.upper if name[0] == "U" else pair.lower)[int(name[1]) - 1]
        v, d1, d2 = _profile_parts(prof, z, scaled)
        out[name] = p.d * d2 - s * d1 + v * bracket
    return out


def bound_residuals(
    pair: BoundPair,
    shift: Optional[ShiftProfile] = None,
    params: Optional[ModelParams] = None,
    grid=None,
    tol: float = 1e-10,
    exclusion: float = 1e-6,
    scaled: bool = False,
    keep_curves: bool = False,
) -> ResidualReport:
    shift = pair.shift if shift is None else shift
    params = pair.params if params is None else params
    z = verification_grid(pair, exclusion=exclusion) if grid is None else np.asarray(grid, dtype=float)
    bps = pair.breakpoints()
    if bps:
        bp = np.asarray(bps)
        near = np.min(np.abs(z[:, None] - bp[None, :]), axis=1) < exclusion
        if near.any():
            raise GridTouchesBreakpoint(
                f"{int(near.sum())} grid point(s) within {exclusion} of a kink, e.g. z={z[near][0]!r}"
            )
    curves = residual_curves(pair, shift, params, z, scaled)
    entries = {}
    for name, r in curves.items():
        margin = -r if name[0] == "U" else r
        i = int(np.argmin(margin))
        entries[name] = ResidualEntry(float(margin[i]), float(z[i]), bool(margin[i] >= -tol))
    rep = ResidualReport(entries, int(z.size), exclusion, tol, scaled)
    if keep_curves:
        rep.curves = {"z": z, **curves}
    return rep


@dataclass
class VerificationReport:
    checks: list
    residuals: ResidualReport

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    @property
    def first_failure(self) -> Optional[tuple]:
        for name, ok, detail in self.checks:
            if not ok:
                return name, detail
        return None

    def as_dict(self) -> dict:
        ff = self.first_failure
        return {
            "passed": self.passed,
            "first_failure": None if ff is None else {"check": ff[0], "detail": ff[1]},
            "checks": [{"check": n, "passed": ok, "detail": d} for n, ok, d in self.checks],
            "residuals": self.residuals.as_dict(),
        }


def verify_pair(
    pair: BoundPair,
    shift: Optional[ShiftProfile] = None,
    params: Optional[ModelParams] = None,
    grid=None,
    tol: float = 1e-10,
    exclusion: float = 1e-6,
    scaled: bool = False,
) -> VerificationReport:
    """Residual signs, ordering, kink directions and limits at -infinity."""
    z = verification_grid(pair, exclusion=exclusion) if grid is None else np.asarray(grid, dtype=float)
    res = bound_residuals(pair, shift, params, z, tol=tol, exclusion=exclusion, scaled=scaled)
    checks = []
    for name, e in res.entries.items():
        checks.append((name, e.passed, {"margin": e.margin, "at": e.at}))

    zo = np.unique(np.concatenate([z, [b for b in pair.breakpoints() if z[0] <= b <= z[-1]]]))
    for i, (up, lo) in enumerate(zip(pair.upper, pair.lower), start=1):
        gap = up.eval(zo) - lo.eval(zo)
        j = int(np.argmin(gap))
        ok = bool(gap[j] >= -tol)
        detail = {"margin": float(gap[j]), "at": float(zo[j])}
        if not ok:
            detail["first_violation"] = float(zo[np.argmax(gap < -tol)])
        checks.append((f"order{i}", ok, detail))

    for i, (up, lo) in enumerate(zip(pair.upper, pair.lower), start=1):
        for side_name, prof, sign in (("upper", up, 1.0), ("lower", lo, -1.0)):
            for b in prof.breakpoints:
                left, right = prof.one_sided(b, 1)
                # upper: right <= left; lower: left <= right
                jump = sign * (left - right)
                checks.append(
                    (f"kink:{side_name}{i}", bool(jump >= -tol), {"at": b, "left": left, "right": right})
                )

    if pair.closed_form:
        zl = float(z[0])
        for i, (up, lo) in enumerate(zip(pair.upper, pair.lower), start=1):
            target = pair.invaded[i - 1]
            for side_name, prof in (("upper", up), ("lower", lo)):
                exact = abs(prof.left_constant() - target) <= 1e-12 and prof.left_decays()
                dev = abs(float(prof.eval(zl)) - target)
                checks.append((f"limit:{side_name}{i}", bool(exact), {"deviation_at_left_end": dev, "z": zl}))
    return VerificationReport(checks, res)


def q1_pass_boundary(
    params: ModelParams,
    s: float,
    shift: ShiftProfile,
    lo: float,
    hi: float,
    rtol: float = 1e-3,
    tol: float = 1e-10,
) -> float:
    """Smallest ``q1`` (to relative ``rtol``) for which the Eu pair still verifies.

    ``lo`` must fail and ``hi`` must pass.
    """
    def passes(q):
        pair = build_bounds(params, s, shift, "Eu-super", overrides={"q1": q})
        return verify_pair(pair, tol=tol).passed

    if passes(lo):
        raise ValueError(f"q1={lo} already passes; widen the bracket")
    if not passes(hi):
        raise ValueError(f"q1={hi} does not pass")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi


def export_pair(pair: BoundPair, outdir, grid=None) -> list:
    """One CSV per profile with columns ``z,value,first,second``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    z = verification_grid(pair) if grid is None else np.asarray(grid, dtype=float)
    paths = []
    for side, profs in (("upper", pair.upper), ("lower", pair.lower)):
        for i, prof in enumerate(profs, start=1):
            cols = np.column_stack([z, prof.eval(z), prof.eval(z, 1), prof.eval(z, 2)])
            path = outdir / f"{side}{i}.csv"
            np.savetxt(path, cols, delimiter=",", header="z,value,first,second", comments="", fmt="%.17g")
            paths.append(path)
    return paths
