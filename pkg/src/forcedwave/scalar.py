"""Monotone iteration for the scalar forced-wave problem

    d phi'' - s phi' + r phi (gamma + alpha_hat - phi) = 0,
    phi(-inf) = gamma,  phi(+inf) = 0.

Iterates start from the constant super-solution ``gamma`` and decrease
pointwise to the largest solution below it.  The comparison function
``gamma * (1 - exp(lambda0 (z - offset)))`` is a sub-solution whenever
``alpha_hat >= -eps * exp(rho z)`` on ``z < 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.sparse import identity
from scipy.sparse.linalg import splu

from .errors import GammaOutOfRange, IterationStall, MaxIterations
from .grid import Grid, apply_transport, transport_matrix

STEP_TOL = 1e-12
RESIDUAL_TOL = 1e-10
#: roundoff allowance when asserting that iterates never increase
MONOTONE_SLACK = 1e-13
LAMBDA_SHRINK = 0.999999


@dataclass
class ScalarWave:
    grid: Grid
    values: np.ndarray
    d: float
    s: float
    r: float
    gamma: float
    lambda0: Optional[float]
    alpha_hat: np.ndarray = field(repr=False)
    residual: float = 0.0
    iterations: int = 0
    #: sub-solution is ``gamma*(1 - exp(lambda0*(z - sub_offset)))`` left of ``sub_offset``
    sub_offset: float = 0.0
    envelope: tuple = (None, None)
    #: largest pointwise increase seen in each iteration (<= 0 up to roundoff)
    increase_history: list = field(default_factory=list, repr=False)
    #: ``gamma - values``, computed directly (accurate where phi is close to gamma)
    deficit: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.deficit is None:
            self.deficit = self.gamma - self.values

    @property
    def z(self) -> np.ndarray:
        return self.grid.z

    def sub_solution(self, z=None) -> np.ndarray:
        z = self.z if z is None else np.asarray(z, dtype=float)
        if self.lambda0 is None:
            return np.zeros_like(z)  # nothing known beyond phi >= 0
        return self.gamma * np.maximum(1.0 - np.exp(self.lambda0 * (z - self.sub_offset)), 0.0)

    def sub_solution_margin(self) -> float:
        """``min(phi - sub)`` over grid points with ``z < 0``."""
        neg = self.z < 0
        if not neg.any():
            return math.inf
        zn = self.z[neg]
        # phi - gamma(1 - e) == gamma*e - chi, evaluated without cancellation
        room = self.gamma * np.minimum(np.exp(self.lambda0 * (zn - self.sub_offset)), 1.0)
        return float(np.min(room - self.deficit[neg]))


def _lambda_window(d: float, s: float, r: float, eps: float):
    """Open interval where ``d lam^2 - s lam + r eps < 0``, or None."""
    disc = s * s - 4.0 * d * r * eps
    if disc <= 0:
        return None
    root = math.sqrt(disc)
    return 2.0 * r * eps / (s + root), (s + root) / (2.0 * d)


def choose_lambda0(d: float, s: float, r: float, rho: float, eps: float):
    """Decay rate and offset of the sub-solution.

    Returns ``(lambda0, offset)``.  When ``eps`` is too large for the rate
    window to reach below ``rho``, the envelope is re-expressed with a
    smaller constant ``eps_t`` at the price of an offset ``ln(eps/eps_t)/rho``.
    """
    lam_peak = min(rho, s / (2.0 * d))
    eps_cap = 0.5 * (s * lam_peak - d * lam_peak**2) / r
    eps_t = min(eps, eps_cap)
    offset = math.log(eps / eps_t) / rho if eps > eps_t else 0.0
    lo, hi = _lambda_window(d, s, r, eps_t)
    lam = LAMBDA_SHRINK * min(rho, s / d, hi)
    if not lam > lo:
        raise ValueError("no admissible sub-solution rate")  # unreachable: eps_t <= eps_cap
    return lam, offset


def solve_scalar_wave(
    d: float,
    s: float,
    r: float,
    gamma: float,
    alpha_hat: Union[Callable, np.ndarray],
    grid: Grid,
    rho: Optional[float] = None,
    epsilon: Optional[float] = None,
    step_tol: float = STEP_TOL,
    residual_tol: float = RESIDUAL_TOL,
    max_iter: int = 50_000,
) -> ScalarWave:
    """Monotone iteration with penalty ``P = r(2 gamma + sup|alpha_hat| + 1)``.

    Args:
        alpha_hat: callable on positions, or its values on ``grid``.
        rho, epsilon: envelope ``alpha_hat >= -epsilon*exp(rho z)`` for z < 0.
            ``rho`` enables the sub-solution bookkeeping; a missing
            ``epsilon`` is measured on the grid.

    Raises:
        GammaOutOfRange: ``gamma < 0`` or ``gamma >= -alpha_hat`` at the right end.
        IterationStall: an iterate increased somewhere.
        MaxIterations: no convergence within ``max_iter`` sweeps.
    """
    z = grid.z
    ah = np.asarray(alpha_hat(z) if callable(alpha_hat) else alpha_hat, dtype=float)
    if ah.shape != z.shape:
        raise ValueError("alpha_hat values do not match the grid")
    right_limit = -ah[-1]
    if gamma < 0 or (gamma > 0 and gamma >= right_limit):
        raise GammaOutOfRange(f"need 0 <= gamma < {right_limit!r}, got {gamma!r}")

    lam0, offset, env = None, 0.0, (epsilon, rho)
    if rho is not None and gamma > 0:
        if epsilon is None:
            neg = z < 0
            epsilon = max(float(np.max(-ah[neg] * np.exp(-rho * z[neg]))), 1e-300) if neg.any() else 1e-300
        env = (epsilon, rho)
        lam0, offset = choose_lambda0(d, s, r, rho, epsilon)

    if gamma == 0:
        return ScalarWave(grid, np.zeros_like(z), d, s, r, gamma, lam0, ah, 0.0, 0, offset, env)

    h = grid.h
    P = r * (2.0 * gamma + float(np.max(np.abs(ah))) + 1.0)
    m = z.size - 2
    A = (P * identity(m, format="csc") - transport_matrix(m, h, d, s)).tocsc()
    lu = splu(A)
    # Iterate on the deficit chi = gamma - phi so that values near gamma keep
    # full relative accuracy.  chi(-L) = 0, chi(L) = gamma.
    bc = np.zeros(m)
    bc[-1] = (d / h**2 - s / (2.0 * h)) * gamma

    chi = np.zeros_like(z)
    chi[-1] = gamma
    history = []
    for it in range(1, max_iter + 1):
        c = chi[1:-1]
        rhs = -r * (gamma - c) * (ah[1:-1] + c) + P * c + bc
        new = chi.copy()
        new[1:-1] = lu.solve(rhs)
        increase = float(np.max(chi - new))
        history.append(increase)
        if increase > MONOTONE_SLACK * max(1.0, gamma):
            raise IterationStall(f"iterate increased by {increase:.3e} at sweep {it}")
        # the exact iteration keeps chi in [0, gamma]; clip the rounding
        np.clip(new, 0.0, gamma, out=new)
        step = float(np.max(np.abs(new - chi)))
        chi = new
        if step < step_tol:
            phi = gamma - chi
            res = _residual(phi, h, d, s, r, gamma, ah)
            if res <= residual_tol:
                return ScalarWave(grid, phi, d, s, r, gamma, lam0, ah, res, it, offset, env, history, chi)
    raise MaxIterations(f"monotone iteration did not converge in {max_iter} sweeps")


def _residual(phi, h, d, s, r, gamma, ah) -> float:
    inner = phi[1:-1]
    res = apply_transport(phi, h, d, s) + r * inner * (gamma + ah[1:-1] - inner)
    return float(np.max(np.abs(res)))


def scalar_residual(wave: ScalarWave) -> float:
    return _residual(wave.values, wave.grid.h, wave.d, wave.s, wave.r, wave.gamma, wave.alpha_hat)
