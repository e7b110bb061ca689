"""Topology recovery for repeated linear-quadratic network games under decaying probing."""

from .dynamics import NoiseConfig, ProbingConfig, Trajectory, cesaro_average, generate_probes, simulate
from .estimation import (
    RecoveryResult,
    adaptive_recover,
    build_incremental_regression,
    compute_schedules,
    excitation_diagnostics,
    extract_support,
    noiseless_recover,
    ols_recover,
    pilot_recover,
    rls_pilot,
    weighted_lasso,
)
from .game import GameSpec, paper6, solve_nash, spectral_radius, validate_game
from .recoverability import check, check_controllability, check_theorem1

__all__ = [
    "NoiseConfig",
    "ProbingConfig",
    "Trajectory",
    "cesaro_average",
    "generate_probes",
    "simulate",
    "RecoveryResult",
    "adaptive_recover",
    "build_incremental_regression",
    "compute_schedules",
    "excitation_diagnostics",
    "extract_support",
    "noiseless_recover",
    "ols_recover",
    "pilot_recover",
    "rls_pilot",
    "weighted_lasso",
    "GameSpec",
    "paper6",
    "solve_nash",
    "spectral_radius",
    "validate_game",
    "check",
    "check_controllability",
    "check_theorem1",
]

__version__ = "0.1.0"
