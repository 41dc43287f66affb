"""Newton solver for the three-component forced-wave system and the chain
construction for the stable-coexistence scenario."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.linalg import solve_banded

from .bounds import BoundConstants, BoundPair, verify_pair
from .errors import EnvelopeUnverified, HypothesisViolation, MaxIterations, NewtonDiverged
from .grid import Grid, apply_transport, default_grid
from .model import ModelParams, SteadyStates, check_hypotheses, kinetics, steady_states
from .profiles import NumericProfile, PiecewiseProfile, const
from .scalar import ScalarWave, solve_scalar_wave
from .shift import ShiftProfile, normalize_translation

NEWTON_TOL = 1e-10
MAX_NEWTON = 200
MAX_HALVINGS = 30
SANDWICH_TOL = 1e-8
OVERSHOOT_TOL = 1e-12
LEFT_BCS = ("auto", "invaded", "seed")


@dataclass
class WaveSolution:
    grid: Grid
    phi: np.ndarray
    residuals: tuple
    left_state: tuple
    right_state: tuple
    invaded: tuple
    params: ModelParams
    s: float
    shift: ShiftProfile = field(repr=False)
    iterations: int = 0
    residual_history: list = field(default_factory=list, repr=False)
    sandwich: Optional[tuple] = None
    sandwich_margin: Optional[tuple] = None
    negative_overshoot: bool = False
    pair: Optional[BoundPair] = field(default=None, repr=False)

    @property
    def z(self) -> np.ndarray:
        return self.grid.z

    @property
    def residual(self) -> float:
        return max(self.residuals)

    @property
    def positive(self) -> tuple:
        return tuple(bool(np.min(c) >= -OVERSHOOT_TOL) for c in self.phi)

    @property
    def sandwiched(self) -> Optional[bool]:
        return None if self.sandwich is None else all(self.sandwich)

    def profile(self, i: int) -> NumericProfile:
        return NumericProfile(self.z, self.phi[i], name=f"phi{i + 1}")

    def state_at(self, z0: float) -> tuple:
        return tuple(float(np.interp(z0, self.z, c)) for c in self.phi)

    def as_dict(self) -> dict:
        return {
            "grid": self.grid.as_dict(),
            "s": self.s,
            "residuals": list(self.residuals),
            "left_state": list(self.left_state),
            "right_state": list(self.right_state),
            "invaded": list(self.invaded),
            "iterations": self.iterations,
            "sandwich": None if self.sandwich is None else list(self.sandwich),
            "sandwich_margin": None if self.sandwich_margin is None else list(self.sandwich_margin),
            "positive": list(self.positive),
            "negative_overshoot": self.negative_overshoot,
        }

    def export(self, path, report: Optional[dict] = None) -> Path:
        """CSV ``z,phi1,phi2,phi3`` plus a JSON sidecar next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        cols = np.column_stack([self.z, *self.phi])
        np.savetxt(path, cols, delimiter=",", header="z,phi1,phi2,phi3", comments="", fmt="%.17g")
        sidecar = dict(self.as_dict(), **(report or {}))
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
        return path


def grid_for_pair(pair: BoundPair, n: int = 8001) -> Grid:
    return default_grid(pair.tail_rate(), pair.shift.K, pair.shift.M, n)


# ---------------------------------------------------------------------------
# residual and Jacobian of the discretized system


def system_residual(phi: np.ndarray, params: ModelParams, s: float, alpha: np.ndarray, h: float) -> np.ndarray:
    """Residuals at interior nodes, shape ``(3, n-2)``."""
    p = params
    inner = phi[:, 1:-1]
    f = kinetics(p, inner[0], inner[1], inner[2], alpha[1:-1])
    return np.array([apply_transport(phi[c], h, p.d, s) + f[c] for c in range(3)])


def _kinetic_jacobian(params: ModelParams, u, v, w, alpha) -> np.ndarray:
    p = params
    J = np.empty((3, 3) + np.shape(u))
    J[0, 0] = p.r1 * (1 + alpha - 2 * u - p.k * v - p.b * w)
    J[0, 1] = -p.r1 * p.k * u
    J[0, 2] = -p.r1 * p.b * u
    J[1, 0] = -p.r2 * p.h * v
    J[1, 1] = p.r2 * (1 + alpha - p.h * u - 2 * v - p.b * w)
    J[1, 2] = -p.r2 * p.b * v
    J[2, 0] = p.r3 * p.a * w
    J[2, 1] = p.r3 * p.a * w
    J[2, 2] = p.r3 * (-1 + alpha + p.a * u + p.a * v - 2 * w)
    return J


def _banded_jacobian(phi, params, s, alpha, h) -> np.ndarray:
    """Jacobian in LAPACK banded storage for the node-interleaved unknowns.

    Unknown ``3*i + c`` is species ``c`` at interior node ``i``; the
    bandwidth is 3 on each side (same-node coupling and neighbours).
    """
    inner = phi[:, 1:-1]
    m = inner.shape[1]
    N = 3 * m
    J = _kinetic_jacobian(params, inner[0], inner[1], inner[2], alpha[1:-1])
    ab = np.zeros((7, N))
    d = params.d
    lo = d / h**2 + s / (2 * h)
    hi = d / h**2 - s / (2 * h)
    rows = 3 * np.arange(m)
    for c in range(3):
        for e in range(3):
            val = J[c, e].copy()
            if c == e:
                val -= 2 * d / h**2
            # A[row, col] sits at ab[3 + row - col, col]
            ab[3 + c - e, rows + e] = val
    ab[0, 3:] = hi  # A[j-3, j]: coupling to the right neighbour
    ab[6, :-3] = lo  # A[j+3, j]: coupling to the left neighbour
    return ab


def _left_values(seed, left_bc, invaded, z_left) -> np.ndarray:
    if left_bc not in LEFT_BCS:
        raise ValueError(f"left_bc must be one of {LEFT_BCS}")
    if left_bc == "invaded" or (left_bc == "auto" and not (isinstance(seed, BoundPair) and seed.closed_form)):
        return np.asarray(invaded, dtype=float)
    if isinstance(seed, BoundPair):
        return seed.midpoint(np.array([z_left]))[:, 0]
    return np.asarray(seed, dtype=float)[:, 0]


def solve_system(
    params: ModelParams,
    s: float,
    shift: Optional[ShiftProfile],
    seed: Union[BoundPair, np.ndarray],
    grid: Optional[Grid] = None,
    invaded: Optional[tuple] = None,
    left_bc: str = "auto",
    tol: float = NEWTON_TOL,
    max_iter: int = MAX_NEWTON,
    max_halvings: int = MAX_HALVINGS,
) -> WaveSolution:
    """Damped Newton on the central-difference discretization.

    The right boundary is 0.  The left boundary is the invaded state, except
    with ``left_bc='auto'`` and a closed-form seed: then the midpoint of the
    bounds at the left end is used.  That value differs from the invaded
    state by the (tiny) tail of the bounds but carries the slow decay mode
    ``exp(lambda z)``; pinning the exact invaded state would push the
    truncated solution onto the fast mode near the boundary.

    Args:
        seed: a bound pair (initial guess = midpoint of the bounds, sandwich
            reported afterwards) or an explicit ``(3, n)`` initial guess.
        invaded: declared state at -infinity; defaults to the pair's.
    """
    pair = seed if isinstance(seed, BoundPair) else None
    if shift is None:
        if pair is None:
            raise ValueError("shift is required when the seed is not a bound pair")
        shift = pair.shift
    if grid is None:
        if pair is None:
            raise ValueError("grid is required when the seed is not a bound pair")
        grid = grid_for_pair(pair)
    if invaded is None:
        if pair is None:
            raise ValueError("invaded state is required when the seed is not a bound pair")
        invaded = pair.invaded
    z = grid.z
    h = grid.h
    alpha = shift(z)
    if pair is not None:
        phi = pair.midpoint(z)
    else:
        phi = np.array(seed, dtype=float, copy=True)
        if phi.shape != (3, z.size):
            raise ValueError(f"initial guess must have shape (3, {z.size})")
    phi[:, 0] = _left_values(seed, left_bc, invaded, z[0])
    phi[:, -1] = 0.0

    def norm(F):
        return float(np.max(np.abs(F)))

    F = system_residual(phi, params, s, alpha, h)
    res = norm(F)
    history = [res]
    it = 0
    while res > tol:
        if it >= max_iter:
            raise MaxIterations(f"Newton did not converge in {max_iter} iterations (residual {res:.3e})")
        it += 1
        ab = _banded_jacobian(phi, params, s, alpha, h)
        delta = solve_banded((3, 3), ab, -F.T.ravel(), check_finite=False).reshape(-1, 3).T
        t = 1.0
        for _ in range(max_halvings + 1):
            trial = phi.copy()
            trial[:, 1:-1] += t * delta
            F_trial = system_residual(trial, params, s, alpha, h)
            r_trial = norm(F_trial)
            if np.isfinite(r_trial) and r_trial < res:
                break
            t *= 0.5
        else:
            raise NewtonDiverged(f"residual {res:.3e} not reduced after {max_halvings} halvings (iteration {it})")
        phi, F, res = trial, F_trial, r_trial
        history.append(res)

    residuals = tuple(float(np.max(np.abs(F[c]))) for c in range(3))
    sol = WaveSolution(
        grid=grid,
        phi=phi,
        residuals=residuals,
        left_state=tuple(float(x) for x in phi[:, 0]),
        right_state=tuple(float(x) for x in phi[:, -1]),
        invaded=tuple(float(x) for x in invaded),
        params=params,
        s=s,
        shift=shift,
        iterations=it,
        residual_history=history,
        negative_overshoot=bool(np.min(phi) < -OVERSHOOT_TOL),
        pair=pair,
    )
    if pair is not None:
        sandwich_check(sol, pair)
    return sol


def sandwich_check(sol: WaveSolution, pair: BoundPair, tol: float = SANDWICH_TOL) -> tuple:
    """Fill ``sol.sandwich`` with per-component ``lower - tol <= phi <= upper + tol`` flags."""
    z = sol.z
    flags, margins = [], []
    for c in range(3):
        lo = pair.lower[c].eval(z)
        up = pair.upper[c].eval(z)
        margin = float(min(np.min(sol.phi[c] - lo), np.min(up - sol.phi[c])))
        margins.append(margin)
        flags.append(bool(margin >= -tol))
    sol.sandwich = tuple(flags)
    sol.sandwich_margin = tuple(margins)
    return sol.sandwich


# ---------------------------------------------------------------------------
# chain construction for the stable-coexistence scenario


@dataclass
class ChainResult:
    pair: BoundPair
    wave: WaveSolution
    gamma2: float
    gamma3: float
    lower2: ScalarWave = field(repr=False)
    lower3: ScalarWave = field(repr=False)
    epsilon: float = 0.0
    #: envelope constant of the composite heterogeneity, with rate lower2.lambda0
    composite_epsilon: float = 0.0
    target: tuple = ()
    left_probe: tuple = ()
    left_probe_error: float = math.inf

    def __iter__(self):
        # unpacks as (pair, wave)
        return iter((self.pair, self.wave))


def chain_epsilon(params: ModelParams, s: float, rho: float, cap: float = 0.01) -> float:
    """Working envelope constant for the first scalar problem."""
    lam = min(rho, s / (2.0 * params.d))
    return min(cap, 0.5 * (s * lam - params.d * lam**2) / params.r2)


def build_estar_chain(
    params: ModelParams,
    s: float,
    shift: ShiftProfile,
    grid: Optional[Grid] = None,
    n: int = 8001,
    tol: float = NEWTON_TOL,
) -> ChainResult:
    """Scalar lower bounds for the strong prey and predator, then the full wave.

    Upper bounds are the constants ``(1, 1, 2a-1)``; lower bounds are
    ``(0, lower2, lower3)`` where ``lower2`` solves the strong-prey scalar
    problem with carrying capacity ``gamma2 = 1-h-b(2a-1)`` and ``lower3``
    the predator problem with ``gamma3 = a*gamma2 - 1`` and heterogeneity
    ``alpha + a(lower2 - gamma2)``.  The full system is then solved from the
    midpoint seed with the left end pinned at the coexistence state.

    Raises:
        HypothesisViolation: conversion or predation threshold fails.
        EnvelopeUnverified: the composite heterogeneity leaves its envelope.
    """
    rep = check_hypotheses(params, s, "Estable")
    if not rep.passed:
        name = rep.first_failure
        raise HypothesisViolation(name, f"Estable: {name} fails ({rep.details.get(name, '')})")
    p = params
    g = 2 * p.a - 1
    gamma2 = 1 - p.h - p.b * g
    gamma3 = p.a * gamma2 - 1
    eps = chain_epsilon(p, s, shift.rho)
    sh = normalize_translation(shift, eps)
    if grid is None:
        grid = default_grid(min(shift.rho, s / p.d), sh.K, sh.M, n)
    z = grid.z
    alpha = sh(z)

    low2 = solve_scalar_wave(p.d, s, p.r2, gamma2, alpha, grid, rho=sh.rho, epsilon=eps)
    alpha3 = alpha + p.a * (low2.values - gamma2)
    eps3 = eps + p.a * gamma2
    lam0 = low2.lambda0
    neg = z < 0
    # With lower2 above its sub-solution, alpha3 >= -(eps + a*gamma2) e^{lam0 (z - offset)}.
    envelope = -eps3 * np.exp(lam0 * (z[neg] - low2.sub_offset))
    gap = alpha3[neg] - envelope
    if gap.size and np.min(gap) < -1e-12:
        i = int(np.argmin(gap))
        raise EnvelopeUnverified(f"composite heterogeneity below its envelope at z={z[neg][i]!r}")
    eps3_eff = eps3 * math.exp(lam0 * low2.sub_offset)
    low3 = solve_scalar_wave(p.d, s, p.r3, gamma3, alpha3, grid, rho=lam0, epsilon=eps3_eff)

    consts = BoundConstants(epsilon=eps, M=sh.M)
    consts.lower_bounds = {}
    upper = (
        PiecewiseProfile([], [const(1.0)], "upper1"),
        PiecewiseProfile([], [const(1.0)], "upper2"),
        PiecewiseProfile([], [const(g)], "upper3"),
    )
    lower = (
        NumericProfile(z, np.zeros_like(z), "lower1"),
        NumericProfile(z, low2.values, "lower2"),
        NumericProfile(z, low3.values, "lower3"),
    )
    st = steady_states(p)
    target = st.E_star_lo
    pair = BoundPair(upper, lower, consts, "Estable-chain", p, s, sh, target)
    wave = solve_system(p, s, sh, pair, grid, invaded=target, left_bc="invaded", tol=tol)
    probe = wave.state_at(wave.z[0] + 0.25 * (wave.z[-1] - wave.z[0]))
    err = max(abs(a - b) for a, b in zip(probe, target))
    return ChainResult(
        pair, wave, gamma2, gamma3, low2, low3, eps, eps3_eff, tuple(target), probe, err,
    )


def large_k_sign_margin(chain: ChainResult) -> tuple:
    """``max(1 + alpha - k*lower2 - b*lower3)`` on the grid and its location.

    Negative everywhere means the weak prey's growth rate is negative along
    the whole wave, which forces it to vanish.
    """
    p = chain.pair.params
    z = chain.wave.z
    val = 1 + chain.pair.shift(z) - p.k * chain.lower2.values - p.b * chain.lower3.values
    i = int(np.argmax(val))
    return float(val[i]), float(z[i])


def verify_chain(chain: ChainResult, tol: float = 1e-6):
    """Residual/ordering checks of the chain pair on its own grid nodes."""
    return verify_pair(chain.pair, tol=tol)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class LimitReport:
    left_state: tuple
    right_state: tuple
    left_probe: tuple
    right_probe: tuple
    left_distances: dict
    right_distances: dict
    left_nearest: str
    right_nearest: str
    decay_rate_right: tuple
    decay_rate_left_phi2: Optional[float]
    minima: tuple

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _distances(state, candidates) -> dict:
    return {name: float(np.max(np.abs(np.subtract(state, c)))) for name, c in candidates.items()}


def _log_slope(z, y) -> Optional[float]:
    ok = y > 0
    if ok.sum() < 3:
        return None
    return float(np.polyfit(z[ok], np.log(y[ok]), 1)[0])


def wave_diagnostics(solution: WaveSolution, states: Optional[SteadyStates] = None) -> LimitReport:
    """Distances of the end and probe states to every constant state, and decay rates.

    End states are the boundary values; probes sit at a quarter of the
    domain from each end and measure how close the interior gets.  The
    right decay rate is a log-slope fit over the last quarter (boundary
    node excluded, nonpositive values skipped); the left rate of ``phi2``
    uses the first quarter.
    """
    states = steady_states(solution.params) if states is None else states
    cand = states.candidates()
    z = solution.z
    n = z.size
    q = n // 4
    lp = solution.state_at(z[q])
    rp = solution.state_at(z[n - 1 - q])
    ld = _distances(solution.left_state, cand)
    rd = _distances(solution.right_state, cand)
    zr = z[n - 1 - q : n - 1]
    rates = tuple(_log_slope(zr, c[n - 1 - q : n - 1]) for c in solution.phi)
    zl = z[1 : q + 1]
    left_rate = _log_slope(zl, solution.phi[1][1 : q + 1])
    return LimitReport(
        left_state=solution.left_state,
        right_state=solution.right_state,
        left_probe=lp,
        right_probe=rp,
        left_distances=ld,
        right_distances=rd,
        left_nearest=min(_distances(lp, cand).items(), key=lambda kv: kv[1])[0],
        right_nearest=min(rd.items(), key=lambda kv: kv[1])[0],
        decay_rate_right=rates,
        decay_rate_left_phi2=left_rate,
        minima=tuple(float(np.min(c)) for c in solution.phi),
    )
