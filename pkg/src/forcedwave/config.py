"""Run configuration: a TOML file validated by a strict schema."""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import ModelParams, critical_speeds
from .shift import ShiftProfile, load_table


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelBlock(_Block):
    d: float = 1.0
    r1: float = 1.0
    r2: float = 1.0
    r3: float = 1.0
    a: float = 2.0
    b: float = 0.1
    h: float = 0.5
    k: float = 1.5
    standing: bool = True

    def build(self) -> ModelParams:
        return ModelParams(**self.model_dump())


class ShiftBlock(_Block):
    family: Literal["sigmoid", "bump", "tabulated"] = "sigmoid"
    m: float = 2.0
    rho: float = 1.5
    K: Optional[float] = None
    C: Optional[float] = Field(None, description="envelope constant; tabulated profiles only")
    bump_amplitude: float = 0.5
    bump_center: float = -5.0
    bump_width: float = 1.0
    table: Optional[str] = Field(None, description="two-column z,alpha file for the tabulated family")

    def build(self, base_dir: Optional[Path] = None) -> ShiftProfile:
        if self.family == "sigmoid":
            return ShiftProfile.sigmoid(self.m, self.rho, self.K)
        if self.family == "bump":
            return ShiftProfile.bump(
                self.m, self.rho, self.bump_amplitude, self.bump_center, self.bump_width, self.K
            )
        if self.table is None or self.K is None or self.C is None:
            raise ValueError("tabulated shift needs table, K and C")
        path = Path(self.table)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_table(path, self.rho, self.K, self.C)


class GridBlock(_Block):
    L: Optional[float] = Field(None, description="half-width; default from the decay rates")
    n: int = 8001


class SolverBlock(_Block):
    tol: float = 1e-10
    max_iter: int = 200
    max_halvings: int = 30
    left_bc: Literal["auto", "invaded", "seed"] = "auto"
    verify_tol: float = 1e-10
    chain_verify_tol: float = 1e-6


class BoundsBlock(_Block):
    epsilon: Optional[float] = None
    overrides: Dict[str, float] = Field(default_factory=dict)
    scaled: bool = False

    @field_validator("overrides")
    @classmethod
    def _known(cls, v):
        allowed = {"epsilon", "mu1", "mu2", "nu1", "q1", "q2", "q3", "q4", "eta1", "eta2"}
        unknown = set(v) - allowed
        if unknown:
            raise ValueError(f"unknown override(s) {sorted(unknown)}; allowed {sorted(allowed)}")
        return v


class SimulationBlock(_Block):
    t_end: float = 100.0
    dt: Optional[float] = None
    snapshot_every: float = 5.0
    left_bc: Literal["invaded", "initial", "free"] = "invaded"
    L: Optional[float] = None
    n: int = 2001
    ic: Literal["wave", "bounds", "pulse"] = "wave"
    variant: Literal["large-k", "subcritical-speed"] = "large-k"
    reference_speed: Optional[float] = None
    extinction_threshold: float = 1e-4
    dwell: float = 10.0
    export_snapshots: bool = False


class SweepBlock(_Block):
    speeds: List[float] = Field(default_factory=list)


class RunConfig(_Block):
    scenario: str = Field("Eu", description="Eu, Estar, Estable, Ev, or a bound family such as Eu-super")
    speed: Union[float, Literal["critical"]] = 2.5
    out: Optional[str] = None
    model: ModelBlock = Field(default_factory=ModelBlock)
    shift: ShiftBlock = Field(default_factory=ShiftBlock)
    grid: GridBlock = Field(default_factory=GridBlock)
    solver: SolverBlock = Field(default_factory=SolverBlock)
    bounds: BoundsBlock = Field(default_factory=BoundsBlock)
    simulation: SimulationBlock = Field(default_factory=SimulationBlock)
    sweep: SweepBlock = Field(default_factory=SweepBlock)

    @property
    def base_scenario(self) -> str:
        return self.scenario.split("-")[0]

    def resolve_speed(self, params: Optional[ModelParams] = None) -> float:
        if self.speed != "critical":
            return float(self.speed)
        params = params or self.model.build()
        cs = critical_speeds(params)
        base = self.base_scenario
        if base == "Eu":
            return max(cs.s2_star, cs.s3_star)
        if base == "Estar":
            return cs.s2_dstar
        if base == "Ev":
            return cs.s3_star
        raise ValueError(f"scenario {self.scenario!r} has no critical speed")


def load_config(path) -> RunConfig:
    path = Path(path)
    with path.open("rb") as fh:
        data = tomllib.load(fh)
    return RunConfig.model_validate(data)


def schema() -> dict:
    return RunConfig.model_json_schema()
