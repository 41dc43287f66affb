"""Command-line entry point: ``forcedwave <subcommand> --config run.toml``.

Exit codes: 0 pass, 1 usage or configuration error, 2 verification
failure, 3 hypothesis violation, 4 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

from .bounds import BOUND_SCENARIOS, build_bounds, export_pair, verify_pair
from .cauchy import SimConfig, convergence_metrics, extinction_experiment, pulse_ic, simulate
from .config import RunConfig, load_config, schema
from .errors import (
    BoxViolation,
    EnvelopeUnverified,
    HypothesisViolation,
    IterationStall,
    MaxIterations,
    NewtonDiverged,
    NoRealRoots,
    NonfiniteValue,
    PrerequisiteViolation,
    SpeedRegimeMismatch,
)
from .grid import Grid
from .model import SPEED_RTOL, check_hypotheses, critical_speeds, steady_states
from .wave import build_estar_chain, grid_for_pair, solve_system, verify_chain, wave_diagnostics

log = logging.getLogger("forcedwave")

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_HYPOTHESIS, EXIT_SOLVER = 0, 1, 2, 3, 4
COMMANDS = ("speeds", "check", "bounds", "verify", "solve", "chain", "simulate", "extinction")
HYPOTHESIS_ERRORS = (HypothesisViolation, SpeedRegimeMismatch, PrerequisiteViolation, NoRealRoots)
SOLVER_ERRORS = (
    NewtonDiverged, MaxIterations, IterationStall, BoxViolation, NonfiniteValue, EnvelopeUnverified,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="forcedwave", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="TOML run configuration")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for [sweep] speeds")
    p.add_argument("--tol", type=float, help="verification / solver tolerance override")
    p.add_argument("--seed-scenario", help="bound family used to seed 'solve'")
    p.add_argument("--print-schema", action="store_true", help="print the config JSON schema and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _bound_scenario(name: str, params, s: float) -> str:
    if name in BOUND_SCENARIOS:
        return name
    cs = critical_speeds(params)
    s_min = {"Eu": max(cs.s2_star, cs.s3_star), "Estar": cs.s2_dstar}.get(name)
    if s_min is None:
        raise HypothesisViolation("scenario", f"no closed-form bounds for scenario {name!r}")
    regime = "critical" if abs(s - s_min) <= SPEED_RTOL * s_min else "super"
    return f"{name}-{regime}"


def _build_pair(cfg: RunConfig, params, shift, s, scenario: Optional[str] = None):
    name = _bound_scenario(scenario or cfg.scenario, params, s)
    return build_bounds(params, s, shift, name, epsilon=cfg.bounds.epsilon, overrides=cfg.bounds.overrides)


def _wave_grid(cfg: RunConfig, pair) -> Grid:
    if cfg.grid.L is not None:
        return Grid(cfg.grid.L, cfg.grid.n)
    return grid_for_pair(pair, cfg.grid.n)


def _cmd_speeds(cfg, params, shift, s, args, out):
    cs, st = critical_speeds(params), steady_states(params)
    return {"critical_speeds": cs.__dict__, "steady_states": st.__dict__}, EXIT_OK


def _cmd_check(cfg, params, shift, s, args, out):
    rep = check_hypotheses(params, s, cfg.base_scenario, rho=shift.rho)
    return {"hypotheses": rep.as_dict()}, EXIT_OK if rep.passed else EXIT_HYPOTHESIS


def _cmd_bounds(cfg, params, shift, s, args, out):
    pair = _build_pair(cfg, params, shift, s)
    files = [str(f) for f in export_pair(pair, out / "bounds")] if out else []
    return {
        "scenario": pair.scenario,
        "constants": pair.constants.as_dict(),
        "shift": pair.shift.as_dict(),
        "files": files,
    }, EXIT_OK


def _cmd_verify(cfg, params, shift, s, args, out):
    pair = _build_pair(cfg, params, shift, s)
    tol = args.tol if args.tol is not None else cfg.solver.verify_tol
    rep = verify_pair(pair, tol=tol, scaled=cfg.bounds.scaled)
    body = {"scenario": pair.scenario, "constants": pair.constants.as_dict(), "verification": rep.as_dict()}
    if not rep.passed:
        name, detail = rep.first_failure
        log.warning("verification failed: %s at z=%s", name, detail.get("at"))
    return body, EXIT_OK if rep.passed else EXIT_VERIFY


def _cmd_solve(cfg, params, shift, s, args, out):
    pair = _build_pair(cfg, params, shift, s, args.seed_scenario)
    tol = args.tol if args.tol is not None else cfg.solver.tol
    wave = solve_system(
        params, s, None, pair, _wave_grid(cfg, pair), left_bc=cfg.solver.left_bc, tol=tol,
        max_iter=cfg.solver.max_iter, max_halvings=cfg.solver.max_halvings,
    )
    diag = wave_diagnostics(wave)
    body = {"scenario": pair.scenario, "wave": wave.as_dict(), "limits": diag.as_dict()}
    if out:
        wave.export(out / "wave.csv")
    return body, EXIT_OK if wave.sandwiched else EXIT_VERIFY


def _cmd_chain(cfg, params, shift, s, args, out):
    grid = Grid(cfg.grid.L, cfg.grid.n) if cfg.grid.L is not None else None
    tol = args.tol if args.tol is not None else cfg.solver.tol
    chain = build_estar_chain(params, s, shift, grid=grid, n=cfg.grid.n, tol=tol)
    ver = verify_chain(chain, cfg.solver.chain_verify_tol)
    body = {
        "gamma2": chain.gamma2,
        "gamma3": chain.gamma3,
        "epsilon": chain.epsilon,
        "target": list(chain.target),
        "left_probe": list(chain.left_probe),
        "left_probe_error": chain.left_probe_error,
        "wave": chain.wave.as_dict(),
        "verification": ver.as_dict(),
    }
    if out:
        chain.wave.export(out / "wave.csv")
    ok = ver.passed and chain.left_probe_error <= 1e-4 and bool(chain.wave.sandwiched)
    return body, EXIT_OK if ok else EXIT_VERIFY


def _sim_config(cfg: RunConfig, invaded) -> SimConfig:
    sim = cfg.simulation
    grid = Grid(sim.L if sim.L is not None else 50.0, sim.n)
    return SimConfig(
        grid=grid, t_end=sim.t_end, dt=sim.dt, snapshot_every=sim.snapshot_every,
        left_bc=sim.left_bc, invaded=invaded, extinction_threshold=sim.extinction_threshold,
        dwell=sim.dwell,
    )


def _cmd_simulate(cfg, params, shift, s, args, out):
    sim = cfg.simulation
    base = cfg.base_scenario
    reference = None
    if base == "Estable":
        sim_cfg = _sim_config(cfg, steady_states(params).E_star_lo)
        chain = build_estar_chain(params, s, shift, grid=sim_cfg.grid)
        sh, invaded = chain.pair.shift, chain.target
        wave, mid = chain.wave, chain.pair.midpoint(sim_cfg.grid.z)
    else:
        pair = _build_pair(cfg, params, shift, s)
        sim_cfg = _sim_config(cfg, pair.invaded)
        sh, invaded = pair.shift, pair.invaded
        mid = pair.midpoint(sim_cfg.grid.z)
        wave = None
        if sim.ic == "wave":
            wave = solve_system(params, s, None, pair, sim_cfg.grid, left_bc=cfg.solver.left_bc)
    if sim.ic == "wave":
        ic, reference = wave.phi, wave.phi
    elif sim.ic == "bounds":
        ic = mid
    else:
        ic = pulse_ic(params, sim_cfg.grid, invaded)
    ic = np.array(ic)
    ic[:, -1] = 0.0
    if sim_cfg.left_bc == "invaded":
        ic[:, 0] = invaded
    traj = simulate(params, s, sh, ic, sim_cfg, reference=reference)
    body = {
        "steps": traj.steps,
        "dt": traj.dt,
        "final_sup": traj.sup_norms[-1].tolist(),
        "box_excess": traj.box_excess,
    }
    if reference is not None:
        body["metrics"] = convergence_metrics(traj, reference).as_dict()
    if out and sim.export_snapshots:
        body["index"] = str(traj.export(out / "snapshots"))
    return body, EXIT_OK


def _cmd_extinction(cfg, params, shift, s, args, out):
    sim = cfg.simulation
    st = steady_states(params)
    invaded = st.E_star_lo if sim.variant == "large-k" else None
    sim_cfg = _sim_config(cfg, invaded)
    scenario = cfg.base_scenario if sim.variant == "subcritical-speed" else None
    rep = extinction_experiment(
        params, s, shift, sim.variant, sim_cfg, scenario=scenario, reference_speed=sim.reference_speed,
    )
    if out and sim.export_snapshots and rep.trajectory is not None:
        rep.trajectory.export(out / "snapshots")
    ok = all(rep.extinct.values())
    if sim.variant == "large-k":
        ok = ok and rep.sign_margin < 0
    return {"extinction": rep.as_dict()}, EXIT_OK if ok else EXIT_VERIFY


HANDLERS = {
    "speeds": _cmd_speeds,
    "check": _cmd_check,
    "bounds": _cmd_bounds,
    "verify": _cmd_verify,
    "solve": _cmd_solve,
    "chain": _cmd_chain,
    "simulate": _cmd_simulate,
    "extinction": _cmd_extinction,
}


def _execute(command: str, cfg: RunConfig, args, s: float, out: Optional[Path]):
    """Run one subcommand at one speed; returns ``(report, exit_code)``."""
    params = cfg.model.build()
    base_dir = Path(args.config).parent if args.config else None
    shift = cfg.shift.build(base_dir)
    try:
        body, code = HANDLERS[command](cfg, params, shift, s, args, out)
    except HYPOTHESIS_ERRORS as exc:
        cond = getattr(exc, "condition", type(exc).__name__)
        body, code = {"error": type(exc).__name__, "condition": cond, "message": str(exc)}, EXIT_HYPOTHESIS
    except SOLVER_ERRORS as exc:
        body, code = {"error": type(exc).__name__, "message": str(exc)}, EXIT_SOLVER
    report = {"command": command, "speed": s, "exit_code": code, **body}
    report["config"] = cfg.model_dump(mode="json")
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(_dumps(report))
    return report, code


def _sweep_worker(payload):
    command, cfg_json, ns, s, out = payload
    cfg = RunConfig.model_validate_json(cfg_json)
    return _execute(command, cfg, argparse.Namespace(**ns), s, Path(out) if out else None)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.print_schema:
        print(json.dumps(schema(), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.out is not None:
            cfg.out = str(args.out)
        out = Path(cfg.out) if cfg.out else None
        speeds = cfg.sweep.speeds or [cfg.resolve_speed()]
        cfg.model.build()
    except (ValidationError, ValueError, OSError) as exc:
        print(f"forcedwave: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if len(speeds) == 1:
            report, code = _execute(args.command, cfg, args, speeds[0], out)
            print(_dumps(report))
            return code
        ns = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
        payloads = [
            (args.command, cfg.model_dump_json(), ns, s, str(out / f"s_{s:.6g}") if out else None)
            for s in speeds
        ]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_sweep_worker, payloads))
        else:
            results = [_sweep_worker(p) for p in payloads]
    except (ValidationError, ValueError) as exc:
        print(f"forcedwave: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    summary = [{"speed": s, "exit_code": code} for s, (_, code) in zip(speeds, results)]
    print(_dumps({"command": args.command, "sweep": summary}))
    return max(code for _, code in results)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
