"""Storage option on a driftless forward-curve market."""

from .curve import CurveFactorModel, ForwardCurve, load_curve_csv, step_curve
from .dispatch import (
    InfeasibleStorageError,
    StorageSpec,
    brute_force_optimize,
    intrinsic_optimize,
    solve_batch,
)
from .rolling import RollingRun, StorageLedgers, run_rolling_intrinsic, theta_gamma_probe

__all__ = [
    "CurveFactorModel",
    "ForwardCurve",
    "InfeasibleStorageError",
    "RollingRun",
    "StorageLedgers",
    "StorageSpec",
    "brute_force_optimize",
    "intrinsic_optimize",
    "load_curve_csv",
    "run_rolling_intrinsic",
    "solve_batch",
    "step_curve",
    "theta_gamma_probe",
]
