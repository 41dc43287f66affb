"""Time-dependent simulation of the system in the frame moving with the shift.

    U_t = d U_zz - s U_z + f(U, alpha(z)),   z = x + s t,

discretized by first-order IMEX Euler: the linear transport-diffusion part
implicit (one sparse LU factorization reused for all species and steps),
the reaction explicit.  Forced waves are steady states of this flow.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .bounds import build_bounds
from .errors import BoxViolation, GridMismatch, NonfiniteValue, PrerequisiteViolation
from .grid import Grid
from .model import ModelParams, check_hypotheses, critical_speeds, kinetics, steady_states
from .shift import ShiftProfile

BOX_TOL = 1e-10
LEFT_BCS = ("invaded", "initial", "free")
VERDICTS = ("converging", "stalled", "diverging")


def box_bounds(params: ModelParams) -> np.ndarray:
    """Upper corner of the invariant box ``[0,1] x [0,1] x [0,2a-1]``."""
    return np.array([1.0, 1.0, 2.0 * params.a - 1.0])


def reaction_lipschitz(params: ModelParams, alpha_sup: float) -> float:
    """Max row sum of ``|df/dU|`` over the invariant box with ``|alpha| <= alpha_sup``."""
    p = params
    g = 2 * p.a - 1
    A = alpha_sup
    row1 = p.r1 * (1 + A + 2 + p.k + p.b * g) + p.r1 * p.k + p.r1 * p.b
    row2 = p.r2 * p.h + p.r2 * (1 + A + p.h + 2 + p.b * g) + p.r2 * p.b
    row3 = 2 * p.r3 * p.a * g + p.r3 * (1 + A + 2 * p.a + 2 * g)
    return max(row1, row2, row3)


def max_time_step(params: ModelParams, shift: ShiftProfile, grid: Grid) -> float:
    A = float(np.max(np.abs(shift(grid.z))))
    return 0.25 / reaction_lipschitz(params, A)


@dataclass
class SimConfig:
    grid: Grid
    t_end: float
    dt: Optional[float] = None
    snapshot_every: float = 1.0
    left_bc: str = "invaded"
    #: left Dirichlet state for ``left_bc='invaded'``
    invaded: Optional[tuple] = None
    box_tol: float = BOX_TOL
    extinction_threshold: float = 1e-4
    dwell: float = 10.0

    def __post_init__(self):
        if self.left_bc not in LEFT_BCS:
            raise ValueError(f"left_bc must be one of {LEFT_BCS}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["grid"] = self.grid.as_dict()
        return out


@dataclass
class Trajectory:
    grid: Grid
    times: np.ndarray
    snapshots: np.ndarray = field(repr=False)
    sup_norms: np.ndarray = field(repr=False)
    distances: Optional[np.ndarray] = field(default=None, repr=False)
    dt: float = 0.0
    steps: int = 0
    box_excess: float = 0.0

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    def export(self, outdir) -> Path:
        """One CSV ``z,u,v,w`` per snapshot plus ``index.csv``."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        z = self.grid.z
        lines = ["index,t,file"]
        for i, (t, snap) in enumerate(zip(self.times, self.snapshots)):
            name = f"snapshot_{i:05d}.csv"
            np.savetxt(
                outdir / name, np.column_stack([z, *snap]), delimiter=",",
                header="z,u,v,w", comments="", fmt="%.17g",
            )
            lines.append(f"{i},{t:.17g},{name}")
        index = outdir / "index.csv"
        index.write_text("\n".join(lines) + "\n")
        return index


def _system_matrix(grid: Grid, d: float, s: float, dt: float, left_bc: str):
    n, h = grid.n, grid.h
    lo = -dt * (d / h**2 + s / (2 * h))
    hi = -dt * (d / h**2 - s / (2 * h))
    main = np.full(n, 1.0 + 2.0 * dt * d / h**2)
    lower = np.full(n - 1, lo)
    upper = np.full(n - 1, hi)
    main[0], upper[0] = 1.0, 0.0
    if left_bc == "free":
        upper[0] = -1.0  # u_0 - u_1 = 0
    main[-1], lower[-1] = 1.0, 0.0
    return splu(sp.diags([lower, main, upper], [-1, 0, 1], format="csc"))


def simulate(
    params: ModelParams,
    s: float,
    shift: ShiftProfile,
    ic: np.ndarray,
    cfg: SimConfig,
    reference: Optional[np.ndarray] = None,
) -> Trajectory:
    """Integrate from ``ic`` (shape ``(3, n)``) to ``cfg.t_end``.

    Args:
        reference: optional ``(3, n)`` array; the sup-distance to it is
            recorded at every snapshot.

    Raises:
        BoxViolation: a value left the invariant box by more than ``cfg.box_tol``.
        NonfiniteValue: NaN or inf appeared.
    """
    grid = cfg.grid
    z = grid.z
    U = np.array(ic, dtype=float, copy=True)
    if U.shape != (3, z.size):
        raise GridMismatch(f"initial condition must have shape (3, {z.size})")
    top = box_bounds(params)[:, None]
    _check_box(U, top, cfg.box_tol, 0.0)
    alpha = shift(z)
    dt_max = max_time_step(params, shift, grid)
    dt = dt_max if cfg.dt is None else cfg.dt
    if dt > dt_max * (1 + 1e-12):
        raise ValueError(f"time step {dt} exceeds the stability bound {dt_max}")
    steps = int(math.ceil(cfg.t_end / dt - 1e-9))
    dt = cfg.t_end / steps
    every = max(1, int(round(cfg.snapshot_every / dt)))
    lu = _system_matrix(grid, params.d, s, dt, cfg.left_bc)

    if cfg.left_bc == "invaded":
        if cfg.invaded is None:
            raise ValueError("left_bc='invaded' needs cfg.invaded")
        left = np.asarray(cfg.invaded, dtype=float)
    else:
        left = U[:, 0].copy()

    times, snaps = [0.0], [U.copy()]
    excess = 0.0
    for step in range(1, steps + 1):
        f = kinetics(params, U[0], U[1], U[2], alpha)
        rhs = U + dt * np.array(f)
        rhs[:, -1] = 0.0
        rhs[:, 0] = 0.0 if cfg.left_bc == "free" else left
        U = lu.solve(np.ascontiguousarray(rhs.T)).T
        if not np.all(np.isfinite(U)):
            raise NonfiniteValue(f"non-finite value at t={step * dt:.6g}")
        excess = max(excess, _check_box(U, top, cfg.box_tol, step * dt))
        if step % every == 0 or step == steps:
            times.append(step * dt)
            snaps.append(U.copy())

    snapshots = np.array(snaps)
    sup = np.max(np.abs(snapshots), axis=2)
    dist = None
    if reference is not None:
        ref = np.asarray(reference)
        if ref.shape != U.shape:
            raise GridMismatch("reference does not match the simulation grid")
        dist = np.max(np.abs(snapshots - ref[None]), axis=(1, 2))
    return Trajectory(grid, np.array(times), snapshots, sup, dist, dt, steps, excess)


def _check_box(U, top, tol, t) -> float:
    below = float(-np.min(U))
    above = float(np.max(U - top))
    worst = max(below, above, 0.0)
    if worst > tol:
        raise BoxViolation(f"state left the invariant box by {worst:.3e} at t={t:.6g}")
    return worst


@dataclass
class ConvergenceMetrics:
    times: np.ndarray
    distances: np.ndarray
    decay_rate: Optional[float]
    verdict: str
    final_distance: float

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "final_distance": self.final_distance,
            "decay_rate": self.decay_rate,
            "empirical": True,
        }


def convergence_metrics(traj: Trajectory, wave, floor: float = 1e-10) -> ConvergenceMetrics:
    """Sup-distance to a wave and an empirical verdict.

    ``wave`` is a ``WaveSolution`` or a ``(3, n)`` array.  The verdict
    compares the first and last thirds of the series: ``converging`` when the
    last third is below half the first (or everything is below ``floor``),
    ``diverging`` when it is above twice the first, ``stalled`` otherwise.
    """
    ref = np.asarray(getattr(wave, "phi", wave))
    if ref.shape != traj.snapshots.shape[1:]:
        raise GridMismatch(f"wave shape {ref.shape} vs trajectory {traj.snapshots.shape[1:]}")
    wave_grid = getattr(wave, "grid", None)
    if wave_grid is not None and not np.allclose(wave_grid.z, traj.grid.z, rtol=0, atol=1e-12):
        raise GridMismatch("wave and trajectory grids differ")
    dist = np.max(np.abs(traj.snapshots - ref[None]), axis=(1, 2))
    k = max(1, dist.size // 3)
    first, last = float(np.max(dist[:k])), float(np.max(dist[-k:]))
    if last <= floor or last < 0.5 * first:
        verdict = "converging"
    elif last > 2.0 * first:
        verdict = "diverging"
    else:
        verdict = "stalled"
    half = dist.size // 2
    t, y = traj.times[half:], dist[half:]
    ok = y > floor
    rate = float(-np.polyfit(t[ok], np.log(y[ok]), 1)[0]) if ok.sum() >= 3 else None
    return ConvergenceMetrics(traj.times, dist, rate, verdict, float(dist[-1]))


# ---------------------------------------------------------------------------
# extinction experiments


@dataclass
class ExtinctionReport:
    variant: str
    s: float
    extinct: dict
    onset: dict
    final_sup: dict
    sign_margin: Optional[float] = None
    sign_margin_at: Optional[float] = None
    wave_sup_u: Optional[float] = None
    left_probe: Optional[tuple] = None
    notes: str = "empirical"
    trajectory: Optional[Trajectory] = field(default=None, repr=False)

    def as_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "trajectory"}
        return json.loads(json.dumps(out, default=float))


def extinction_onset(traj: Trajectory, species: int, threshold: float, dwell: float) -> Optional[float]:
    """First time after which the species' sup-norm stays below ``threshold`` for ``dwell``.

    A sup-norm that is still below threshold at the end only counts when the
    remaining stretch is at least ``dwell`` long.
    """
    below = traj.sup_norms[:, species] < threshold
    t = traj.times
    for i in range(t.size):
        if not below[i]:
            continue
        j = i
        while j + 1 < t.size and below[j + 1]:
            j += 1
        if t[j] - t[i] >= dwell:
            return float(t[i])
    return None


def pulse_ic(params: ModelParams, grid: Grid, background, center: float = 0.0,
             width: float = 5.0, height: float = 0.5) -> np.ndarray:
    """Background state plus compactly supported pulses of the two species absent from it."""
    z = grid.z
    bump = np.where(np.abs(z - center) < width, np.cos(0.5 * np.pi * (z - center) / width) ** 2, 0.0)
    U = np.array([np.full_like(z, c) for c in background])
    top = box_bounds(params)
    for c in range(3):
        if background[c] == 0.0:
            U[c] = np.minimum(height * top[c] * bump, top[c])
    U[:, -1] = 0.0
    return U


def extinction_experiment(
    params: ModelParams,
    s: float,
    shift: ShiftProfile,
    variant: str,
    cfg: SimConfig,
    scenario: Optional[str] = None,
    reference_speed: Optional[float] = None,
    ic: Optional[np.ndarray] = None,
) -> ExtinctionReport:
    """Large-k weak-prey extinction, or the fate of invaders below the minimal speed.

    ``large-k`` solves the chain construction, checks the sign of the weak
    prey's growth rate along its lower bounds and simulates from the
    midpoint of the chain bounds.  ``subcritical-speed`` (scenario ``Eu`` or
    ``Estar``) defaults to compact pulses of the invaders on the invaded
    state for ``Eu`` and, for ``Estar``, to the midpoint of the bounds built
    at ``reference_speed`` (default 1.1 times the minimal speed).
    """
    from .wave import build_estar_chain, large_k_sign_margin  # local: wave imports bounds

    z = cfg.grid.z
    if variant == "large-k":
        rep = check_hypotheses(params, s, "Estable")
        if not rep.passed:
            raise PrerequisiteViolation(f"large-k needs the stable-coexistence conditions: {rep.first_failure} fails")
        chain = build_estar_chain(params, s, shift, grid=cfg.grid)
        margin, where = large_k_sign_margin(chain)
        start = chain.pair.midpoint(z) if ic is None else ic
        start[:, 0] = chain.target
        start[:, -1] = 0.0
        run_cfg = SimConfig(**{**cfg.__dict__, "invaded": chain.target})
        traj = simulate(params, s, chain.pair.shift, start, run_cfg)
        onset = extinction_onset(traj, 0, 1e-6, run_cfg.dwell)
        final = {"u": float(traj.sup_norms[-1, 0])}
        return ExtinctionReport(
            variant, s, {"u": final["u"] <= 1e-6}, {"u": onset}, final,
            sign_margin=margin, sign_margin_at=where,
            wave_sup_u=float(np.max(np.abs(chain.wave.phi[0]))), trajectory=traj,
        )
    if variant != "subcritical-speed":
        raise ValueError(f"unknown variant {variant!r}")
    if scenario not in ("Eu", "Estar"):
        raise PrerequisiteViolation("subcritical-speed needs scenario 'Eu' or 'Estar'")
    rep = check_hypotheses(params, s, scenario)
    s_min = rep.necessary_speed
    if not s < s_min:
        raise PrerequisiteViolation(f"speed {s} is not below the minimal speed {s_min}")
    st = steady_states(params)
    invaded = st.E_u if scenario == "Eu" else st.E_star_up
    invaders = (1, 2) if scenario == "Eu" else (1,)
    if ic is None:
        if scenario == "Eu":
            ic = pulse_ic(params, cfg.grid, invaded)
        else:
            s_ref = 1.1 * s_min if reference_speed is None else reference_speed
            pair = build_bounds(params, s_ref, shift, "Estar-super")
            ic = pair.midpoint(z)
            ic[:, -1] = 0.0
    ic = np.array(ic, dtype=float)
    ic[:, 0] = invaded
    run_cfg = SimConfig(**{**cfg.__dict__, "invaded": invaded})
    traj = simulate(params, s, shift, ic, run_cfg)
    names = ("u", "v", "w")
    extinct, onset, final = {}, {}, {}
    for c in invaders:
        on = extinction_onset(traj, c, cfg.extinction_threshold, cfg.dwell)
        onset[names[c]] = on
        extinct[names[c]] = on is not None
        final[names[c]] = float(traj.sup_norms[-1, c])
    probe = tuple(float(np.interp(z[0] + 0.25 * (z[-1] - z[0]), z, comp)) for comp in traj.final)
    return ExtinctionReport(variant, s, extinct, onset, final, left_probe=probe, trajectory=traj)
