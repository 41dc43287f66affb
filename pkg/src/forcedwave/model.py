"""Parameters, constant states, invasion speeds and existence conditions.

The reduced system has equal diffusion ``d``, equal conversion ``a`` and
equal predation ``b`` for both preys::

    u_t = d u_zz - s u_z + r1 u (1 + alpha - u - k v - b w)
    v_t = d v_zz - s v_z + r2 v (1 + alpha - h u - v - b w)
    w_t = d w_zz - s w_z + r3 w (-1 + alpha + a u + a v - w)

written in the frame ``z = x + s t`` that moves with the environment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidParameters, NoRealRoots, UnknownScenario

#: relative tolerance used for every "is this speed exactly critical" test
SPEED_RTOL = 1e-9

SCENARIOS = ("Eu", "Estar", "Estable", "Ev")


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the reduced three-species system.

    ``standing=True`` enforces the weak/strong competition regime
    ``a > 1`` and ``0 < h < 1 < k``; pass ``standing=False`` to explore
    other regimes with the simulator.
    """

    d: float = 1.0
    r1: float = 1.0
    r2: float = 1.0
    r3: float = 1.0
    a: float = 2.0
    b: float = 0.1
    h: float = 0.5
    k: float = 1.5
    standing: bool = True

    def __post_init__(self):
        for name in ("d", "r1", "r2", "r3", "a", "b", "h", "k"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameters(f"{name} must be finite and > 0, got {value!r}")
        if self.standing and not self.satisfies_standing():
            raise InvalidParameters(
                f"standing assumption a > 1, 0 < h < 1 < k violated "
                f"(a={self.a}, h={self.h}, k={self.k}); pass standing=False to override"
            )

    def satisfies_standing(self) -> bool:
        return self.a > 1 and 0 < self.h < 1 < self.k

    def replace(self, **changes) -> "ModelParams":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return ModelParams(**values)

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass(frozen=True)
class SteadyStates:
    E_u: tuple
    E_v: tuple
    E_star_up: tuple
    E_star_lo: tuple
    u_p: float
    v_p: float
    w_p: float
    beta_up: float
    beta_lo: float

    def candidates(self) -> dict:
        return {
            "E0": (0.0, 0.0, 0.0),
            "E_u": self.E_u,
            "E_v": self.E_v,
            "E_star_up": self.E_star_up,
            "E_star_lo": self.E_star_lo,
        }


@dataclass(frozen=True)
class CriticalSpeeds:
    s2_star: float
    s2_dstar: float
    s3_star: float
    lambda_u: float
    lambda_star: float


@dataclass(frozen=True)
class RootInfo:
    """Real roots of ``d*lam**2 - s*lam + c``; equal roots in the critical case."""

    small: float
    large: float
    double: bool
    coeffs: tuple

    def poly(self, lam):
        d, s, c = self.coeffs
        return d * lam * lam - s * lam + c


def kinetics(params: ModelParams, u, v, w, alpha=0.0):
    """Reaction terms of the three equations (vectorised)."""
    p = params
    f1 = p.r1 * u * (1.0 + alpha - u - p.k * v - p.b * w)
    f2 = p.r2 * v * (1.0 + alpha - p.h * u - v - p.b * w)
    f3 = p.r3 * w * (-1.0 + alpha + p.a * u + p.a * v - w)
    return f1, f2, f3


def steady_states(params: ModelParams) -> SteadyStates:
    p = params
    u_p = (1.0 + p.b) / (1.0 + p.a * p.b)
    w_p = (p.a - 1.0) / (1.0 + p.a * p.b)
    scale = (1.0 + p.b) / (1.0 + p.a * p.b)
    return SteadyStates(
        E_u=(1.0, 0.0, 0.0),
        E_v=(0.0, 1.0, 0.0),
        E_star_up=(u_p, 0.0, w_p),
        E_star_lo=(0.0, u_p, w_p),
        u_p=u_p,
        v_p=u_p,
        w_p=w_p,
        beta_up=(1.0 - p.h) * scale,
        beta_lo=(1.0 - p.k) * scale,
    )


def critical_speeds(params: ModelParams) -> CriticalSpeeds:
    p = params
    beta_up = steady_states(p).beta_up
    return CriticalSpeeds(
        s2_star=2.0 * math.sqrt(p.d * p.r2 * (1.0 - p.h)),
        s2_dstar=2.0 * math.sqrt(p.d * p.r2 * beta_up),
        s3_star=2.0 * math.sqrt(p.d * p.r3 * (p.a - 1.0)),
        lambda_u=math.sqrt(p.r3 * (p.a - 1.0) / p.d),
        lambda_star=math.sqrt(p.r2 * beta_up / p.d),
    )


def _growth_constant(params: ModelParams, which: str) -> float:
    if which in ("A1", "Q1"):
        return params.r3 * (params.a - 1.0)
    if which in ("A2", "Q2"):
        return params.r2 * steady_states(params).beta_up
    raise ValueError(f"unknown quadratic {which!r}")


def q_threshold(params: ModelParams, rho: float, which: str = "Q1") -> float:
    """Speed threshold tied to the envelope decay rate ``rho`` of the shift.

    Below the knee ``sqrt(c/d)`` the threshold is ``d*rho + c/rho``; above
    it the threshold saturates at the minimal speed ``2*sqrt(d*c)``.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho!r}")
    c = _growth_constant(params, which)
    knee = math.sqrt(c / params.d)
    if rho < knee:
        return params.d * rho + c / rho
    return 2.0 * math.sqrt(params.d * c)


def characteristic_roots(params: ModelParams, s: float, which: str = "A1") -> RootInfo:
    if not s > 0:
        raise ValueError(f"speed must be positive, got {s!r}")
    c = _growth_constant(params, which)
    d = params.d
    s_min = 2.0 * math.sqrt(d * c)
    if abs(s - s_min) <= SPEED_RTOL * s_min:
        lam = math.sqrt(c / d)
        return RootInfo(lam, lam, True, (d, s, c))
    disc = s * s - 4.0 * d * c
    if disc < 0:
        raise NoRealRoots(f"{which}: speed {s} below minimal speed {s_min}")
    root = math.sqrt(disc)
    large = (s + root) / (2.0 * d)
    small = 2.0 * c / (s + root)
    return RootInfo(small, large, False, (d, s, c))


@dataclass
class HypothesisReport:
    scenario: str
    kind: str
    conditions: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    epsilon_max: Optional[float] = None
    necessary_speed: Optional[float] = None
    critical: bool = False

    @property
    def passed(self) -> bool:
        return all(self.conditions.values())

    @property
    def first_failure(self) -> Optional[str]:
        for name, ok in self.conditions.items():
            if not ok:
                return name
        return None

    def working_epsilon(self, cap: float = 0.01) -> Optional[float]:
        if self.epsilon_max is None or self.epsilon_max <= 0:
            return None
        return min(cap, 0.5 * self.epsilon_max)

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "kind": self.kind,
            "passed": self.passed,
            "first_failure": self.first_failure,
            "conditions": dict(self.conditions),
            "details": dict(self.details),
            "epsilon_max": self.epsilon_max,
            "necessary_speed": self.necessary_speed,
            "critical": self.critical,
        }


def _at_least(s: float, threshold: float, rtol: float = SPEED_RTOL) -> bool:
    return s >= threshold * (1.0 - rtol)


def check_hypotheses(
    params: ModelParams,
    s: float,
    scenario: str,
    rho: Optional[float] = None,
    rtol: float = SPEED_RTOL,
) -> HypothesisReport:
    """Evaluate, one by one, the conditions behind each existence result.

    ``rho`` is the envelope decay rate of the shift profile; when given, the
    speed is also compared with the corresponding ``q_threshold``.
    """
    if scenario not in SCENARIOS:
        raise UnknownScenario(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    p = params
    ss = steady_states(p)
    cs = critical_speeds(p)
    kind = "necessary-only" if scenario == "Ev" else "sufficient"
    rep = HypothesisReport(scenario=scenario, kind=kind)
    rep.conditions["standing"] = p.satisfies_standing()
    rep.details["standing"] = f"a={p.a} > 1 and 0 < h={p.h} < 1 < k={p.k}"

    if scenario == "Eu":
        lhs, rhs = p.r2 * (1.0 - p.h), p.r3 * (p.a - 1.0)
        rep.conditions["equal_speeds"] = abs(lhs - rhs) <= rtol * max(abs(lhs), abs(rhs))
        rep.details["equal_speeds"] = f"r2(1-h)={lhs!r} vs r3(a-1)={rhs!r}"
        deficit = p.r1 * (p.k + p.b * (2 * p.a - 1) - 1.0)
        rep.conditions["prey_growth_margin"] = deficit < rhs
        rep.details["prey_growth_margin"] = f"r1[k+b(2a-1)-1]={deficit!r} < r3(a-1)={rhs!r}"
        s_min = max(cs.s2_star, cs.s3_star)
        rep.necessary_speed = s_min
        rep.critical = abs(s - s_min) <= rtol * s_min
        window = (rhs - deficit) / p.r1
        rep.epsilon_max = math.e * window if rep.critical else window
        q_name = "Q1"
    elif scenario == "Estar":
        growth = p.r2 * ss.beta_up
        weak = p.r1 * ((p.k - 1.0) + p.b * (2 * p.a - 1))
        rep.conditions["strong_prey_dominance"] = max(weak, p.r3) < growth
        rep.details["strong_prey_dominance"] = (
            f"max(r1[(k-1)+b(2a-1)]={weak!r}, r3={p.r3!r}) < r2*beta_up={growth!r}"
        )
        s_min = cs.s2_dstar
        rep.necessary_speed = s_min
        rep.critical = abs(s - s_min) <= rtol * s_min
        window = min(growth / p.r1 - ((p.k - 1.0) + p.b * (2 * p.a - 1)), growth / p.r3 - 1.0)
        rep.epsilon_max = math.e * window if rep.critical else window
        q_name = "Q2"
    elif scenario == "Estable":
        rep.conditions["conversion_threshold"] = p.a > 1.0 / (1.0 - p.h) if p.h < 1 else False
        rep.details["conversion_threshold"] = f"a={p.a} > 1/(1-h)"
        b_max = (1.0 - p.h - 1.0 / p.a) / (2 * p.a - 1)
        rep.conditions["predation_threshold"] = p.b < b_max
        rep.details["predation_threshold"] = f"b={p.b} < (1-h-1/a)/(2a-1)={b_max!r}"
        rep.conditions["positive_speed"] = s > 0
        return rep
    else:  # Ev: only the necessary speed is known
        s_min = cs.s3_star
        rep.necessary_speed = s_min
        rep.critical = abs(s - s_min) <= rtol * s_min
        q_name = None

    rep.conditions["speed_threshold"] = _at_least(s, s_min, rtol)
    rep.details["speed_threshold"] = f"s={s!r} >= {s_min!r}"
    if rho is not None and q_name is not None:
        q = q_threshold(p, rho, q_name)
        rep.conditions["envelope_rate"] = _at_least(s, q, rtol)
        rep.details["envelope_rate"] = f"s={s!r} >= {q_name}(rho={rho!r})={q!r}"
    return rep


def kinetic_residual(params: ModelParams, state) -> float:
    """Sup-norm of the reaction terms at a constant state with ``alpha = 0``."""
    u, v, w = (np.asarray(x, dtype=float) for x in state)
    return float(max(np.max(np.abs(f)) for f in kinetics(params, u, v, w)))
