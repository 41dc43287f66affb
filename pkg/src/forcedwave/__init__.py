"""Forced waves of a two-prey/one-predator reaction-diffusion system in a shifting habitat."""
from .bounds import (
    BOUND_SCENARIOS,
    BoundConstants,
    BoundPair,
    ResidualReport,
    VerificationReport,
    bound_residuals,
    build_bounds,
    export_pair,
    verify_pair,
)
from .cauchy import (
    SimConfig,
    Trajectory,
    convergence_metrics,
    extinction_experiment,
    simulate,
)
from .errors import *  # noqa: F401,F403
from .grid import Grid, default_grid
from .model import (
    CriticalSpeeds,
    HypothesisReport,
    ModelParams,
    SteadyStates,
    characteristic_roots,
    check_hypotheses,
    critical_speeds,
    q_threshold,
    steady_states,
)
from .profiles import NumericProfile, PiecewiseProfile, Term, eval_profile
from .scalar import ScalarWave, solve_scalar_wave
from .shift import ShiftProfile, alpha_eval, normalize_translation, verify_envelope
from .wave import LimitReport, WaveSolution, build_estar_chain, solve_system, wave_diagnostics

__version__ = "0.1.0"
